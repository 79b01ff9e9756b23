//! Inequality verification against closed-form fields and quadrature
//! oracles, plus the operator-family sweeps.

use quadgrad_core::grid::{boundary_quotient, lp_mean, Grid, GridFunction};
use quadgrad_core::harnack::{
    apriori_chain, verify_blmp, verify_bqsmp, verify_bqsmp_growth, verify_bwhi, verify_interior,
    InequalityId, InfRegion, OperatorFamily, RegionSet,
};
use quadgrad_core::operators::{
    assemble_linear, CoefficientBounds, MField, OperatorCoefficients, ProblemSpec,
};
use quadgrad_core::solver::{linear_solve, newton, NewtonOptions};
use quadgrad_core::CoreError;
use quadgrad_oracles::quadrature::rect_integral;

use std::sync::Arc;

fn unit_square(n: usize) -> Arc<Grid> {
    Grid::build(2, &[1.0, 1.0], &[n, n]).unwrap()
}

fn boundary_regions(grid: &Grid) -> RegionSet {
    RegionSet::boundary(grid, 0.5, 0.25, [1.0, 1.5, 2.0]).unwrap()
}

/// Dirichlet solve of -L0 u = h with boundary data g.
fn solve_linear(
    coeffs: &OperatorCoefficients,
    h: GridFunction,
    g: GridFunction,
) -> GridFunction {
    let grid = coeffs.grid().clone();
    let spec = ProblemSpec::new(
        coeffs.clone(),
        GridFunction::zeros(&grid),
        MField::Scalar(GridFunction::zeros(&grid)),
        h,
        g,
        0.0,
    )
    .unwrap();
    linear_solve(&assemble_linear(&spec).unwrap()).unwrap()
}

#[test]
fn bqsmp_on_harmonic_profile_is_vacuous() {
    // u = x_n is harmonic: rhs = 0, lhs = 1, constant = infinity
    let grid = unit_square(33);
    let coeffs = OperatorCoefficients::laplacian(&grid);
    let u = GridFunction::from_fn(&grid, |x| x[1]);
    let regions = boundary_regions(&grid);
    let rep = verify_bqsmp(&u, &coeffs, 0.25, &regions, None).unwrap();
    assert_eq!(rep.rhs, 0.0);
    assert!((rep.lhs - 1.0).abs() < 1e-12);
    assert!(rep.constant.is_infinite());
    assert!(rep.pass);
}

#[test]
fn bqsmp_on_poisson_solution_with_constant_source() {
    // -Delta u = 1, u = 0 on all faces: rhs = measure(inner)^(1/eps) exactly
    let grid = unit_square(33);
    let coeffs = OperatorCoefficients::laplacian(&grid);
    let u = solve_linear(&coeffs, GridFunction::constant(&grid, 1.0), GridFunction::zeros(&grid));
    let regions = boundary_regions(&grid);
    let eps = 0.25;
    let rep = verify_bqsmp(&u, &coeffs, eps, &regions, None).unwrap();
    assert!(rep.lhs > 0.0);
    let measure = regions.inner.measure(&grid);
    assert!((rep.rhs - measure.powf(1.0 / eps)).abs() < 1e-10 * rep.rhs.max(1.0));
    assert!(rep.constant.is_finite() && rep.constant > 0.0);
}

#[test]
fn bqsmp_constant_survives_shrinking_source_support() {
    // -Delta u = indicator of a box shrinking to measure 0.01: the
    // empirical constant stays bounded below (the quantitative content).
    let grid = unit_square(65);
    let coeffs = OperatorCoefficients::laplacian(&grid);
    let regions = boundary_regions(&grid);
    let mut consts = Vec::new();
    for half in [0.25, 0.12, 0.05] {
        let h = GridFunction::from_fn(&grid, |x| {
            let inx = (x[0] - 0.5).abs() <= half;
            let iny = (x[1] - 0.1).abs() <= half.min(0.1);
            if inx && iny {
                1.0
            } else {
                0.0
            }
        });
        let u = solve_linear(&coeffs, h, GridFunction::zeros(&grid));
        let rep = verify_bqsmp(&u, &coeffs, 0.25, &regions, None).unwrap();
        assert!(rep.constant.is_finite());
        consts.push(rep.constant);
    }
    for c in &consts {
        assert!(*c > 0.05, "constant collapsed: {consts:?}");
    }
}

#[test]
fn bqsmp_growth_variant_triggers_on_positive_set() {
    let grid = unit_square(33);
    let coeffs = OperatorCoefficients::laplacian(&grid);
    let u = solve_linear(&coeffs, GridFunction::constant(&grid, 1.0), GridFunction::zeros(&grid));
    let regions = boundary_regions(&grid);
    // -L0 u = 1 > tau = 0.5 everywhere: the set fills the whole inner box
    let rep = verify_bqsmp_growth(&u, &coeffs, 0.5, 0.5 * regions.inner.measure(&grid), &regions, None)
        .unwrap();
    assert_eq!(rep.rhs, 1.0);
    assert!(rep.constant.is_finite() && rep.constant > 0.0);
    // threshold above the source: set empty, inequality vacuous
    let rep2 = verify_bqsmp_growth(&u, &coeffs, 2.0, 1e-6, &regions, None).unwrap();
    assert_eq!(rep2.rhs, 0.0);
}

#[test]
fn bqsmp_refuses_uncertified_fields() {
    let grid = unit_square(17);
    let coeffs = OperatorCoefficients::laplacian(&grid);
    let regions = boundary_regions(&grid);
    // -Delta(x_n^2) = -2 < 0: not a supersolution
    let u = GridFunction::from_fn(&grid, |x| x[1] * x[1]);
    match verify_bqsmp(&u, &coeffs, 0.25, &regions, None) {
        Err(CoreError::PreconditionFailed { node, .. }) => {
            assert!(node < grid.n_nodes());
        }
        other => panic!("expected refusal, got {other:?}"),
    }
    // negative field fails the sign hypothesis
    let neg = GridFunction::from_fn(&grid, |x| -x[1]);
    assert!(matches!(
        verify_bqsmp(&neg, &coeffs, 0.25, &regions, None),
        Err(CoreError::PreconditionFailed { .. })
    ));
}

#[test]
fn bwhi_on_linear_profile_matches_measure_power() {
    let grid = unit_square(33);
    let coeffs = OperatorCoefficients::laplacian(&grid);
    let u = GridFunction::from_fn(&grid, |x| x[1]);
    let f = GridFunction::zeros(&grid);
    let regions = boundary_regions(&grid);
    let eps = 0.5;
    let rep = verify_bwhi(&u, &f, &coeffs, eps, &regions, InfRegion::Middle, None).unwrap();
    // quotient == 1: lhs = measure(middle)^(1/eps), rhs = 1
    let measure = regions.middle.measure(&grid);
    assert!((rep.lhs - measure.powf(1.0 / eps)).abs() < 1e-12);
    assert!((rep.rhs - 1.0).abs() < 1e-12);
    assert!((rep.constant - measure.powf(1.0 / eps)).abs() < 1e-12);
}

#[test]
fn bwhi_quotient_integral_matches_quadrature_oracle() {
    // u = x_n (2 - x_n) on the unit square: quotient 2 - x_n, f = 2
    let grid = unit_square(65);
    let coeffs = OperatorCoefficients::laplacian(&grid);
    let u = GridFunction::from_fn(&grid, |x| x[1] * (2.0 - x[1]));
    let f = GridFunction::constant(&grid, 2.0);
    let regions = boundary_regions(&grid);
    let eps = 0.5;
    let rep = verify_bwhi(&u, &f, &coeffs, eps, &regions, InfRegion::Middle, None).unwrap();
    // independent quadrature of (int (2 - y)^eps)^{1/eps} over the middle box
    let (xlo, xhi) = (0.125, 0.875);
    let (ylo, yhi) = (0.0, 0.375);
    let integral = rect_integral(|_x, y| (2.0 - y).powf(eps), (xlo, xhi), (ylo, yhi), 1e-10);
    let lhs_oracle = integral.powf(1.0 / eps);
    assert!(
        (rep.lhs - lhs_oracle).abs() / lhs_oracle < 1e-3,
        "lhs {} oracle {lhs_oracle}",
        rep.lhs
    );
    // rhs: inf of the quotient over the middle box is 2 - 0.375; f^- = 0
    assert!((rep.rhs - (2.0 - 0.375)).abs() < 1e-12);
}

#[test]
fn bwhi_reports_both_inf_region_choices() {
    let grid = unit_square(33);
    let coeffs = OperatorCoefficients::laplacian(&grid);
    let u = solve_linear(&coeffs, GridFunction::constant(&grid, 1.0), GridFunction::zeros(&grid));
    let f = GridFunction::constant(&grid, 1.0);
    let regions = boundary_regions(&grid);
    let mid = verify_bwhi(&u, &f, &coeffs, 0.25, &regions, InfRegion::Middle, None).unwrap();
    let inn = verify_bwhi(&u, &f, &coeffs, 0.25, &regions, InfRegion::Inner, None).unwrap();
    // the infimum over the larger region can only be smaller
    assert!(mid.rhs <= inn.rhs + 1e-12);
    assert!(mid.constant >= inn.constant - 1e-12);
}

#[test]
fn blmp_closed_form_oracle() {
    // u = x_n (1 - x_n): -Delta u = 2, d = 0, f = 2; sup of quotient = 1
    let grid = unit_square(65);
    let coeffs = OperatorCoefficients::laplacian(&grid);
    let u = GridFunction::from_fn(&grid, |x| x[1] * (1.0 - x[1]));
    let d = GridFunction::zeros(&grid);
    let f = GridFunction::constant(&grid, 2.0);
    let regions = boundary_regions(&grid);
    let p = 1.0;
    let rep = verify_blmp(&u, &d, &f, &coeffs, p, 3.0, &regions, None).unwrap();
    assert!((rep.lhs - 1.0).abs() < 1e-12, "sup quotient at the face is 1");
    // oracle: int over middle of y(1-y) + (int over outer of 2^2)^(1/2)
    let (xlo, xhi) = (0.125, 0.875);
    let (ylo, yhi) = (0.0, 0.375);
    let int_u = rect_integral(|_x, y| y * (1.0 - y), (xlo, xhi), (ylo, yhi), 1e-10);
    let int_f = (4.0 * regions.outer.measure(&grid)).sqrt();
    let rhs_oracle = int_u + int_f;
    assert!(
        (rep.rhs - rhs_oracle).abs() / rhs_oracle < 1e-3,
        "rhs {} oracle {rhs_oracle}",
        rep.rhs
    );
    assert!(rep.d_norm_q.unwrap() == 0.0);
}

#[test]
fn blmp_nonpositive_field_is_trivial() {
    let grid = unit_square(17);
    let coeffs = OperatorCoefficients::laplacian(&grid);
    // u = -x_n(1-x_n) is a subsolution of -Delta u <= 0 + f with f = 0?
    // -Delta u = -2 <= 0. u^+ = 0 everywhere.
    let u = GridFunction::from_fn(&grid, |x| -x[1] * (1.0 - x[1]));
    let d = GridFunction::zeros(&grid);
    let f = GridFunction::zeros(&grid);
    let regions = boundary_regions(&grid);
    let rep = verify_blmp(&u, &d, &f, &coeffs, 1.0, 3.0, &regions, None).unwrap();
    assert_eq!(rep.lhs, 0.0);
}

#[test]
fn interior_trivial_and_oracle_cases() {
    let grid = unit_square(65);
    let coeffs = OperatorCoefficients::laplacian(&grid);
    let regions = RegionSet::interior(&grid, 0.15, [1.0, 1.5, 2.0]).unwrap();

    // u == 1 harmonic: QSMP rhs = 0, lhs = 1
    let one = GridFunction::constant(&grid, 1.0);
    let rep = verify_interior(InequalityId::Qsmp, &one, None, &coeffs, 0.25, &regions, None).unwrap();
    assert_eq!(rep.rhs, 0.0);
    assert!((rep.lhs - 1.0).abs() < 1e-12);

    // bump solving -Delta u = indicator(ball): WHI constant finite
    let h = GridFunction::from_fn(&grid, |x| {
        let r2 = (x[0] - 0.5) * (x[0] - 0.5) + (x[1] - 0.5) * (x[1] - 0.5);
        if r2 < 0.04 {
            1.0
        } else {
            0.0
        }
    });
    let u = solve_linear(&coeffs, h.clone(), GridFunction::zeros(&grid));
    let rep =
        verify_interior(InequalityId::Whi, &u, Some(&h), &coeffs, 0.5, &regions, None).unwrap();
    assert!(rep.constant.is_finite() && rep.constant > 0.0);

    // LMP with a sign-changing separable source, checked against quadrature
    let f = GridFunction::from_fn(&grid, |x| (2.0 * std::f64::consts::PI * x[0]).sin());
    let u2 = solve_linear(&coeffs, f.clone(), GridFunction::zeros(&grid));
    let rep2 =
        verify_interior(InequalityId::Lmp, &u2, Some(&f), &coeffs, 1.0, &regions, None).unwrap();
    // oracle for the f^+ term over the outer box
    let (xl, xh) = (grid.coord(regions.outer.lo[0])[0], grid.coord(regions.outer.hi[0])[0]);
    let f_plus_sq = rect_integral(
        |x, _y| {
            let v = (2.0 * std::f64::consts::PI * x).sin().max(0.0);
            v * v
        },
        (xl, xh),
        (xl, xh),
        1e-10,
    );
    let up = u2.map(|v| v.max(0.0));
    let int_up = lp_mean(&up, 1.0, &regions.middle).unwrap();
    let rhs_oracle = int_up + f_plus_sq.sqrt();
    assert!(
        (rep2.rhs - rhs_oracle).abs() / rhs_oracle < 1e-3,
        "rhs {} oracle {rhs_oracle}",
        rep2.rhs
    );
}

#[test]
fn scaling_covariance_of_empirical_constants() {
    let grid = unit_square(33);
    let coeffs = OperatorCoefficients::laplacian(&grid);
    let regions = boundary_regions(&grid);
    let h = GridFunction::from_fn(&grid, |x| 1.0 + 0.3 * (std::f64::consts::PI * x[0]).sin());
    let u = solve_linear(&coeffs, h.clone(), GridFunction::zeros(&grid));
    for t in [3.0, 0.04, 250.0] {
        let tu = u.map(|v| t * v);
        let th = h.map(|v| t * v);
        let a = verify_bqsmp(&u, &coeffs, 0.25, &regions, None).unwrap();
        let b = verify_bqsmp(&tu, &coeffs, 0.25, &regions, None).unwrap();
        assert!((a.constant - b.constant).abs() <= 1e-10 * a.constant.abs());
        let aw = verify_bwhi(&u, &h, &coeffs, 0.25, &regions, InfRegion::Middle, None).unwrap();
        let bw = verify_bwhi(&tu, &th, &coeffs, 0.25, &regions, InfRegion::Middle, None).unwrap();
        assert!((aw.constant - bw.constant).abs() <= 1e-10 * aw.constant.abs());
        assert!((b.lhs - t * a.lhs).abs() <= 1e-10 * t * a.lhs.abs());
        assert!((b.rhs - t * a.rhs).abs() <= 1e-10 * t * a.rhs.abs());
    }
}

#[test]
fn operator_family_is_deterministic_and_within_bounds() {
    let grid = unit_square(17);
    let fam = OperatorFamily::new(
        CoefficientBounds { lambda_ell: 1.0, big_lambda_ell: 3.0, sup_b: 1.0 },
        42,
        8,
    );
    for k in 0..fam.count {
        let a = fam.sample(&grid, k).unwrap();
        let b = fam.sample(&grid, k).unwrap();
        assert_eq!(a.a.at(33), b.a.at(33));
        assert!(a.sup_b() <= 1.0 + 1e-12);
    }
    // distinct seeds give distinct operators
    let a = fam.sample(&grid, 0).unwrap();
    let b = fam.sample(&grid, 1).unwrap();
    assert!(a.a.at(33) != b.a.at(33));
}

#[test]
fn family_sweep_certifies_and_bounds_constants() {
    // 50-sample family with (1, 3, 1): every sample's Dirichlet solve of
    // -L0 u = 1 certifies and yields finite report values; the spread of the
    // weak-Harnack constant at eps = 0.25 stays below 10.
    let grid = unit_square(33);
    let fam = OperatorFamily::new(
        CoefficientBounds { lambda_ell: 1.0, big_lambda_ell: 3.0, sup_b: 1.0 },
        2024,
        50,
    );
    let regions = boundary_regions(&grid);
    let f = GridFunction::constant(&grid, 1.0);
    let mut consts = Vec::new();
    for k in 0..fam.count {
        let coeffs = fam.sample(&grid, k).unwrap();
        let u = solve_linear(&coeffs, f.clone(), GridFunction::zeros(&grid));
        let rep = verify_bwhi(&u, &f, &coeffs, 0.25, &regions, InfRegion::Middle, None).unwrap();
        assert!(rep.constant.is_finite() && rep.constant > 0.0);
        consts.push(rep.constant);
    }
    let max = consts.iter().cloned().fold(f64::MIN, f64::max);
    let min = consts.iter().cloned().fold(f64::MAX, f64::min);
    assert!(max / min < 10.0, "spread {} = {max}/{min}", max / min);
}

#[test]
fn bwhi_blmp_combination_bounds_full_boundary_harnack_ratio() {
    // positive fields with -L0 u = 0, zero on the flat portion, positive
    // data elsewhere: the product of the two constants bounds the full
    // quotient oscillation on the inner box
    let grid = unit_square(33);
    let fam = OperatorFamily::new(
        CoefficientBounds { lambda_ell: 1.0, big_lambda_ell: 3.0, sup_b: 1.0 },
        7,
        20,
    );
    let regions = boundary_regions(&grid);
    let eps = 0.25;
    let zero = GridFunction::zeros(&grid);
    let mut done = 0;
    for k in 0..fam.count {
        let coeffs = fam.sample(&grid, k).unwrap();
        let g = GridFunction::from_fn(&grid, |x| x[1] * (1.0 + 0.5 * x[0]));
        let u = solve_linear(&coeffs, zero.clone(), g);
        let whi = verify_bwhi(&u, &zero, &coeffs, eps, &regions, InfRegion::Middle, None).unwrap();
        let lmp = verify_blmp(&u, &zero, &zero, &coeffs, eps, 3.0, &regions, None).unwrap();
        let q = boundary_quotient(&u).unwrap();
        let ratio = q.sup_over(&regions.inner) / q.inf_over(&regions.inner);
        let product = whi.constant * lmp.constant;
        assert!(
            ratio <= product * (1.0 + 1e-12),
            "sample {k}: ratio {ratio} > product {product}"
        );
        done += 1;
    }
    assert_eq!(done, 20);
}

#[test]
fn chain_on_fold_region_solution_has_finite_steps() {
    let grid = Grid::build(1, &[1.0], &[129]).unwrap();
    let spec = ProblemSpec::model(
        &grid,
        GridFunction::constant(&grid, 1.0),
        GridFunction::constant(&grid, 1.0),
        GridFunction::constant(&grid, 1.0),
        2.0,
    )
    .unwrap();
    let sol = newton(&spec, &spec.flat_start(), &NewtonOptions::default()).unwrap();
    assert!(sol.converged());
    let regions = RegionSet::boundary(&grid, 0.5, 0.25, [1.0, 1.5, 2.0]).unwrap();
    let rep = apriori_chain(&sol, &spec, 1.0, 1.0, 0.25, &regions).unwrap();
    for step in &rep.steps {
        if !step.vacuous {
            assert!(step.constant.is_finite(), "step {} = {:?}", step.name, step);
        }
    }
    assert!(rep.sup_v2_inner > 0.0);
    // small solution: the asymptotics are not active
    assert!(!rep.asymptotic);
}

#[test]
fn chain_rejects_violated_hypotheses() {
    let grid = Grid::build(1, &[1.0], &[33]).unwrap();
    let spec = ProblemSpec::model(
        &grid,
        GridFunction::constant(&grid, 1.0),
        GridFunction::constant(&grid, 1.0),
        GridFunction::constant(&grid, 1.0),
        0.5,
    )
    .unwrap();
    let sol = newton(&spec, &spec.flat_start(), &NewtonOptions::default()).unwrap();
    let regions = RegionSet::boundary(&grid, 0.5, 0.25, [1.0, 1.5, 2.0]).unwrap();
    // mu bounds that do not contain mu(x) = 1
    assert!(matches!(
        apriori_chain(&sol, &spec, 2.0, 3.0, 0.25, &regions),
        Err(CoreError::PreconditionFailed { .. })
    ));
    // c identically zero on the region
    let mut spec0 = spec.clone();
    spec0.c = GridFunction::zeros(&grid);
    let sol0 = newton(&spec0, &spec0.flat_start(), &NewtonOptions::default()).unwrap();
    assert!(apriori_chain(&sol0, &spec0, 1.0, 1.0, 0.25, &regions).is_err());
}
