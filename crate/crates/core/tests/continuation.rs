//! Branch tracing cross-checked against direct linear solves and an
//! independent shooting oracle for the 1D two-point problem.

use quadgrad_core::continuation::{
    blowup_asymptote, classify, detect_folds, principal_lambda, trace_from_flat_start, Branch,
    BranchPoint, DiagramKind, Formulation, Termination, TraceOptions,
};
use quadgrad_core::grid::{Grid, GridFunction};
use quadgrad_core::operators::{assemble_linear, ProblemSpec};
use quadgrad_core::solver::{linear_solve, newton, NewtonOptions};
use quadgrad_core::transform::{forward, semilinear_problem, TransformSpec};
use quadgrad_oracles::shooting::{find_roots, largest_solvable_parameter, log_grid};

use std::sync::Arc;

const PI: f64 = std::f64::consts::PI;

fn model(n: usize, mu: f64, lambda: f64) -> ProblemSpec {
    let grid = Grid::build(1, &[1.0], &[n]).unwrap();
    ProblemSpec::model(
        &grid,
        GridFunction::constant(&grid, 1.0),
        GridFunction::constant(&grid, mu),
        GridFunction::constant(&grid, 1.0),
        lambda,
    )
    .unwrap()
}

fn shooting_rhs(lambda: f64) -> impl Fn(f64, f64) -> f64 {
    move |_x: f64, v: f64| {
        if v <= -1.0 {
            1.0
        } else {
            lambda * (1.0 + v) * v.ln_1p() + (1.0 + v)
        }
    }
}

#[test]
fn linear_branch_matches_direct_solves_and_diverges_at_lambda1() {
    let spec = model(65, 0.0, 0.0);
    let opts = TraceOptions {
        lambda_max: 12.0,
        ds: 0.1,
        targets: vec![5.0, 9.5],
        ..TraceOptions::default()
    };
    let branch = trace_from_flat_start(&spec, &opts).unwrap();
    assert_eq!(branch.termination, Termination::BlowUp);
    assert!(detect_folds(&branch).is_empty(), "linear branch has no fold");

    // m(u) strictly increasing in lambda along the branch
    for w in branch.points.windows(2) {
        assert!(w[1].lambda > w[0].lambda - 1e-12);
        assert!(w[1].m_u >= w[0].m_u - 1e-12);
    }

    // exact landings on the targets, each matching the direct linear solve
    for &tau in &[5.0, 9.5] {
        let pt = branch
            .points
            .iter()
            .find(|p| (p.lambda - tau).abs() < 1e-12)
            .unwrap_or_else(|| panic!("target {tau} not landed on"));
        let direct = linear_solve(&assemble_linear(&spec.with_lambda(tau)).unwrap()).unwrap();
        assert!(pt.u.sup_distance(&direct) < 1e-8);
    }
    let sup5 = branch.points.iter().find(|p| (p.lambda - 5.0).abs() < 1e-12).unwrap().sup_u;
    let sup95 = branch.points.iter().find(|p| (p.lambda - 9.5).abs() < 1e-12).unwrap().sup_u;
    assert!(sup95 > 5.0 * sup5, "sup at 9.5 = {sup95}, at 5 = {sup5}");

    // asymptote extrapolation approaches the discrete principal eigenvalue
    let lambda1 = principal_lambda(&spec).unwrap();
    let asym = blowup_asymptote(&branch, 6).unwrap();
    assert!((asym - lambda1).abs() / lambda1 < 0.01, "asym {asym} lambda1 {lambda1}");
    assert!((lambda1 - PI * PI).abs() < 0.01);
}

#[test]
fn trivial_branch_for_zero_source() {
    let grid = Grid::build(1, &[1.0], &[33]).unwrap();
    let spec = ProblemSpec::model(
        &grid,
        GridFunction::constant(&grid, 1.0),
        GridFunction::constant(&grid, 1.0),
        GridFunction::zeros(&grid),
        0.0,
    )
    .unwrap();
    let opts = TraceOptions { lambda_max: 3.0, ds: 0.2, ..TraceOptions::default() };
    let branch = trace_from_flat_start(&spec, &opts).unwrap();
    assert_eq!(branch.termination, Termination::RangeEnd);
    for p in &branch.points {
        assert!(p.sup_u < 1e-12, "zero branch stays zero");
    }
}

fn fold_lambda_on_grid(n: usize) -> f64 {
    let spec = model(n, 1.0, 0.0);
    let opts = TraceOptions {
        lambda_max: 8.0,
        ds: 0.1,
        sup_cap: 25.0,
        ..TraceOptions::default()
    };
    let branch = trace_from_flat_start(&spec, &opts).unwrap();
    let folds = detect_folds(&branch);
    assert_eq!(folds.len(), 1, "exactly one fold, got {folds:?}");
    assert_eq!(branch.termination, Termination::BlowUp);
    // past the fold sup u increases while lambda decreases
    let fi = folds[0].0;
    for w in branch.points[fi + 1..].windows(2) {
        assert!(w[1].lambda <= w[0].lambda + 1e-9);
        assert!(w[1].sup_u >= w[0].sup_u - 1e-9);
    }
    folds[0].1
}

#[test]
fn quadratic_gradient_branch_has_one_fold_matching_shooting() {
    let l65 = fold_lambda_on_grid(65);
    let l129 = fold_lambda_on_grid(129);
    assert!((l65 - l129).abs() / l129 < 0.01, "fold drift {l65} vs {l129}");

    let sigma = log_grid(1e-2, 1e4, 900);
    let lstar = largest_solvable_parameter(shooting_rhs, 4.0, 8.0, &sigma, 3000, 1e-5);
    assert!(
        (l129 - lstar).abs() / lstar < 0.01,
        "continuation fold {l129} vs shooting {lstar}"
    );
    // the fold sits strictly between 0 and the principal eigenvalue
    assert!(lstar > 0.0 && lstar < PI * PI);
}

#[test]
fn first_diagram_classification_and_reverification() {
    let spec = model(65, 1.0, 0.0);
    let opts = TraceOptions {
        lambda_max: 8.0,
        ds: 0.1,
        sup_cap: 25.0,
        ..TraceOptions::default()
    };
    let branch = trace_from_flat_start(&spec, &opts).unwrap();
    let lambda1 = principal_lambda(&spec).unwrap();
    let class = classify(&branch, lambda1, 1.0).unwrap();
    assert_eq!(class.kind, DiagramKind::FoldWithBlowupTowardZero);
    assert!(class.fold_lambda.unwrap() < lambda1);
    assert!(class.blowup_lambda.unwrap() < class.fold_lambda.unwrap());

    // every branch point re-verified by a fresh Newton solve at its lambda
    // (substituted formulation, the one the trace used), in <= 2 iterations
    let t = TransformSpec::positive(1.0).unwrap();
    let opts_n = NewtonOptions::default();
    for p in branch.points.iter().step_by(7) {
        let sspec = semilinear_problem(&spec.with_lambda(p.lambda), &t).unwrap();
        let w = forward(&p.u, &t).unwrap();
        let sol = newton(&sspec, &w, &opts_n).unwrap();
        assert!(sol.converged());
        assert!(sol.iterations <= 2, "reverify took {} iterations", sol.iterations);
    }

    // symmetry: even coefficients about x = 1/2 give even solutions
    for p in branch.points.iter().step_by(11) {
        let n = p.u.values().len();
        for i in 0..n / 2 {
            let d = (p.u.value(i) - p.u.value(n - 1 - i)).abs();
            assert!(d <= 1e-8 * (1.0 + p.u.sup_norm()), "asymmetry {d}");
        }
    }
}

#[test]
fn third_diagram_for_negative_mu() {
    let spec = model(65, -1.0, 0.0);
    let lambda1 = principal_lambda(&spec).unwrap();
    let opts = TraceOptions {
        lambda_max: lambda1 + 1.1,
        ds: 0.1,
        ..TraceOptions::default()
    };
    let branch = trace_from_flat_start(&spec, &opts).unwrap();
    assert_eq!(branch.termination, Termination::RangeEnd);
    let class = classify(&branch, lambda1, 1.0).unwrap();
    assert_eq!(class.kind, DiagramKind::ThroughPrincipalEigenvalue);
    // bounded all the way past lambda1
    for p in &branch.points {
        assert!(p.sup_u < 50.0, "negative-mu branch stays bounded");
    }
    // and it genuinely crossed the eigenvalue
    assert!(branch.points.last().unwrap().lambda >= lambda1 + 1.0);
}

#[test]
fn second_diagram_for_zero_mu() {
    let spec = model(65, 0.0, 0.0);
    let opts = TraceOptions { lambda_max: 12.0, ds: 0.1, ..TraceOptions::default() };
    let branch = trace_from_flat_start(&spec, &opts).unwrap();
    let lambda1 = principal_lambda(&spec).unwrap();
    let class = classify(&branch, lambda1, 1.0).unwrap();
    assert_eq!(class.kind, DiagramKind::BlowupAtPrincipalEigenvalue);
    let asym = class.asymptote.unwrap();
    assert!((asym - lambda1).abs() / lambda1 < 0.01);
}

#[test]
fn synthetic_fold_detection_at_parabola_vertex() {
    // lambda(s) = 1 - s^2 sampled uniformly; tangent flips sign at s = 0
    let grid = Grid::build(1, &[1.0], &[5]).unwrap();
    let mk = |s: f64| BranchPoint {
        s: s + 1.0,
        lambda: 1.0 - s * s,
        m_u: 0.0,
        sup_u: 0.0,
        tangent_lambda: -2.0 * s,
        u: GridFunction::zeros(&grid),
    };
    let points: Vec<BranchPoint> = (-5..=5).map(|i| mk(i as f64 * 0.1 + 0.05)).collect();
    let branch = Branch { points, folds: vec![], termination: Termination::RangeEnd };
    let folds = detect_folds(&branch);
    assert_eq!(folds.len(), 1);
    assert!((folds[0].1 - 1.0).abs() < 1e-12, "vertex at lambda = 1, got {}", folds[0].1);
}

#[test]
fn shooting_confirms_exactly_two_solutions_below_the_fold() {
    // at lambda = 2.85 the model problem has exactly two solutions within
    // the window sup u <= 100
    let sigma = log_grid(1e-3, 1e45, 2200);
    let g = shooting_rhs(2.85);
    let roots = find_roots(&g, &sigma, 3000, 1e-9);
    let in_window: Vec<_> =
        roots.iter().filter(|(_, sup)| (1.0 + sup).ln() <= 100.0).collect();
    assert_eq!(in_window.len(), 2, "roots: {roots:?}");
}

#[test]
fn rejects_unconverged_start() {
    let spec = model(33, 1.0, 0.0);
    let base = spec.with_lambda(0.0);
    let mut start = newton(&base, &base.flat_start(), &NewtonOptions::default()).unwrap();
    start.status = quadgrad_core::solver::SolveStatus::Diverged;
    let opts = TraceOptions::default();
    assert!(quadgrad_core::continuation::trace(&base, &start, &opts).is_err());
}

#[test]
fn direct_formulation_also_traces_moderate_branches() {
    // force the primal variable; the lower branch up to a modest cap is
    // resolvable there and must agree with the substituted trace
    let spec = model(65, 1.0, 0.0);
    let sub = TraceOptions {
        lambda_max: 3.0,
        ds: 0.1,
        targets: vec![2.0],
        ..TraceOptions::default()
    };
    let dir = TraceOptions { formulation: Formulation::Direct, ..sub.clone() };
    let b_sub = trace_from_flat_start(&spec, &sub).unwrap();
    let b_dir = trace_from_flat_start(&spec, &dir).unwrap();
    let at = |b: &Branch, tau: f64| -> GridFunction {
        b.points
            .iter()
            .find(|p| (p.lambda - tau).abs() < 1e-12)
            .expect("target landed")
            .u
            .clone()
    };
    let (us, ud) = (at(&b_sub, 2.0), at(&b_dir, 2.0));
    // two different discretizations of the same solution: O(h^2) agreement
    assert!(us.sup_distance(&ud) < 5e-4, "distance {}", us.sup_distance(&ud));
}

#[test]
fn principal_lambda_matches_discrete_eigenvalue() {
    let spec = model(33, 0.0, 0.0);
    let h = 1.0 / 32.0;
    let exact_h = 2.0 / (h * h) * (1.0 - (PI * h).cos());
    let l1 = principal_lambda(&spec).unwrap();
    assert!((l1 - exact_h).abs() < 1e-7 * exact_h);
    let _unused: Arc<Grid> = Grid::build(1, &[1.0], &[5]).unwrap();
}
