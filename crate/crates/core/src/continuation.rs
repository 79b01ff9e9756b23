//! Pseudo-arclength continuation in `lambda`: branch tracing with a tangent
//! predictor and bordered Newton corrector, fold detection, and
//! classification of the resulting diagram.
//!
//! The arclength metric scales the field component relative to its current
//! size, `ds^2 = |dw|^2/(1+|w|)^2 + dlambda^2`, so branches whose solutions
//! grow exponentially (the upper branch of the quadratic-gradient problem)
//! advance in a bounded number of steps.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::grid::GridFunction;
use crate::linalg::smallest_pencil_eigenvalue;
use crate::math;
use crate::operators::{
    assemble_linear, dresidual_dlambda, jacobian, primal_from_substituted, residual_and_scale,
    ProblemKind, ProblemSpec,
};
use crate::solver::{newton, NewtonOptions, SolveStatus, Solution};
use crate::transform::{semilinear_problem, TransformSpec};

/// Which variable the branch is traced in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    /// Pick `Substituted` when the gradient coefficient is a nonzero constant
    /// scalar and the leading part is the identity; `Direct` otherwise.
    Auto,
    Direct,
    /// Trace the exponentially substituted semilinear problem; robust for
    /// steep solutions far up the branch.
    Substituted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    RangeEnd,
    BlowUp,
    StepFloor,
    MaxSteps,
}

/// One converged branch point, reported in the primal variable.
#[derive(Debug, Clone)]
pub struct BranchPoint {
    /// Cumulative (scaled) arclength.
    pub s: f64,
    pub lambda: f64,
    /// Primal solution value at the observation node.
    pub m_u: f64,
    pub sup_u: f64,
    /// lambda-component of the unit tangent leaving this point.
    pub tangent_lambda: f64,
    pub u: GridFunction,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    /// Fold annotations: point index before the sign change and the
    /// interpolated fold location.
    pub folds: Vec<(usize, f64)>,
    pub termination: Termination,
}

#[derive(Debug, Clone)]
pub struct TraceOptions {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Initial arclength step.
    pub ds: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_steps: usize,
    /// Observation node; defaults to the node nearest the centroid.
    pub observation: Option<usize>,
    /// `lambda` values every crossing of which inserts an exactly-solved
    /// branch point (deterministic mesh-to-mesh comparisons need this).
    pub targets: Vec<f64>,
    /// Blow-up when the primal sup-norm exceeds this (the overflow threshold
    /// on `mu*u` is checked independently).
    pub sup_cap: f64,
    pub formulation: Formulation,
    pub newton: NewtonOptions,
    pub corrector_max_iter: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            lambda_min: 0.0,
            lambda_max: 10.0,
            ds: 0.05,
            ds_min: 1e-6,
            ds_max: 0.5,
            max_steps: 20_000,
            observation: None,
            targets: Vec::new(),
            sup_cap: 1e6,
            formulation: Formulation::Auto,
            newton: NewtonOptions::default(),
            corrector_max_iter: 12,
        }
    }
}

/// Diagram shape: fold to the right with blow-up toward `lambda = 0` on the
/// upper branch; monotone branch blowing up at the principal eigenvalue;
/// branch crossing the principal eigenvalue with bounded solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagramKind {
    FoldWithBlowupTowardZero,
    BlowupAtPrincipalEigenvalue,
    ThroughPrincipalEigenvalue,
}

#[derive(Debug, Clone)]
pub struct DiagramClass {
    pub kind: DiagramKind,
    pub fold_lambda: Option<f64>,
    /// `lambda` of the last computed point of a blowing-up branch.
    pub blowup_lambda: Option<f64>,
    /// Asymptote estimate from extrapolating `lambda` against `1/m(u)`.
    pub asymptote: Option<f64>,
    /// Principal eigenvalue of the weighted linearization.
    pub lambda1: f64,
}

/// Smallest eigenvalue of `-L0 phi = lambda c phi` on the interior nodes by
/// inverse power iteration.
pub fn principal_lambda(spec: &ProblemSpec) -> Result<f64> {
    let mut base = spec.with_lambda(0.0);
    base.kind = ProblemKind::Primal;
    let sys = assemble_linear(&base)?;
    let c_diag: Vec<f64> = sys.interior().iter().map(|&idx| spec.c.value(idx)).collect();
    smallest_pencil_eigenvalue(&sys.band, &c_diag, 1e-12, 1000)
}

struct Tracer {
    spec: ProblemSpec,
    mu_sub: Option<f64>,
    mesh_w: f64,
    opts: TraceOptions,
    obs: usize,
}

impl Tracer {
    fn solve_spec(&self, lambda: f64) -> ProblemSpec {
        self.spec.with_lambda(lambda)
    }

    fn to_primal(&self, w: &GridFunction) -> Result<GridFunction> {
        match self.mu_sub {
            Some(mu) => primal_from_substituted(w, mu),
            None => Ok(w.clone()),
        }
    }

    /// Relative-scale weight frozen at the current point.
    fn theta(&self, w: &GridFunction) -> f64 {
        1.0 / (1.0 + self.wnorm(w))
    }

    fn wnorm(&self, w: &GridFunction) -> f64 {
        let s: f64 = w.values().iter().map(|v| v * v).sum();
        math::sqrt(s * self.mesh_w)
    }

    fn wdot(&self, a: &GridFunction, b: &GridFunction) -> f64 {
        let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
        s * self.mesh_w
    }

    /// Unit tangent `(t_w, t_lambda)` at `(w, lambda)` in the scaled metric,
    /// oriented along the previous tangent when given.
    fn tangent(
        &self,
        w: &GridFunction,
        lambda: f64,
        orient: Option<(&GridFunction, f64, f64)>,
    ) -> Result<(GridFunction, f64)> {
        let spec = self.solve_spec(lambda);
        let sys = jacobian(&spec, w)?;
        let lu = sys.band.clone().factorize()?;
        let g = dresidual_dlambda(&spec, w)?;
        let neg_g: Vec<f64> = sys.gather(&g).iter().map(|v| -v).collect();
        let tw_int = lu.solve(&neg_g);
        let tw = sys.scatter(&tw_int)?;
        let th = self.theta(w);
        let nn = math::sqrt(th * th * self.wdot(&tw, &tw) + 1.0);
        let mut tw = tw.map(|v| v / nn);
        let mut tl = 1.0 / nn;
        if let Some((pw, pl, pth)) = orient {
            let d = pth * th * self.wdot(&tw, pw) + tl * pl;
            if d < 0.0 {
                tw = tw.map(|v| -v);
                tl = -tl;
            }
        }
        Ok((tw, tl))
    }

    /// Bordered Newton corrector from the predictor `(w, lambda)`. The
    /// arclength constraint is linear, so full steps are taken; step size
    /// control handles failures.
    fn correct(
        &self,
        mut w: GridFunction,
        mut lambda: f64,
        tw: &GridFunction,
        tl: f64,
        th: f64,
        w_pred: &GridFunction,
        lambda_pred: f64,
    ) -> Result<(GridFunction, f64)> {
        for _ in 0..self.opts.corrector_max_iter {
            let spec = self.solve_spec(lambda);
            let (r, scale) = residual_and_scale(&spec, &w)?;
            let rn = r.sup_norm();
            if rn <= self.opts.newton.tol * scale.max(1.0) {
                return Ok((w, lambda));
            }
            let sys = jacobian(&spec, &w)?;
            let lu = sys.band.clone().factorize()?;
            let g = dresidual_dlambda(&spec, &w)?;
            let neg_r: Vec<f64> = sys.gather(&r).iter().map(|v| -v).collect();
            let a = sys.scatter(&lu.solve(&neg_r))?;
            let b = sys.scatter(&lu.solve(&sys.gather(&g)))?;
            let dwp = w.axpy(-1.0, w_pred);
            let n = th * th * self.wdot(tw, &dwp) + tl * (lambda - lambda_pred);
            let denom = tl - th * th * self.wdot(tw, &b);
            if denom == 0.0 || !denom.is_finite() {
                return Err(CoreError::SingularMatrix { pivot: 0.0 });
            }
            let dlambda = (-n - th * th * self.wdot(tw, &a)) / denom;
            w = w.axpy(1.0, &a).axpy(-dlambda, &b);
            lambda += dlambda;
            if !lambda.is_finite() {
                return Err(CoreError::Diverged { iterations: 0, residual: rn });
            }
            w.check_finite()?;
        }
        Err(CoreError::Diverged { iterations: self.opts.corrector_max_iter, residual: f64::NAN })
    }

    /// Plain Newton at a fixed `lambda` (target insertion and range-end
    /// clamping).
    fn solve_at(&self, lambda: f64, seed: &GridFunction) -> Result<Solution> {
        let spec = self.solve_spec(lambda);
        let sol = newton(&spec, seed, &self.opts.newton)?;
        if sol.status != SolveStatus::Converged {
            return Err(CoreError::Diverged {
                iterations: sol.iterations,
                residual: sol.residual_norm,
            });
        }
        Ok(sol)
    }

    fn make_point(&self, s: f64, lambda: f64, w: &GridFunction, tl: f64) -> Result<BranchPoint> {
        let u = self.to_primal(w)?;
        Ok(BranchPoint {
            s,
            lambda,
            m_u: u.value(self.obs),
            sup_u: u.max_value(),
            tangent_lambda: tl,
            u,
        })
    }

    fn blown_up(&self, w: &GridFunction, sup_u: f64) -> bool {
        if sup_u > self.opts.sup_cap {
            return true;
        }
        let overflow = self.opts.newton.overflow;
        match self.mu_sub {
            Some(mu) => {
                let mut worst: f64 = 0.0;
                for &v in w.values() {
                    let t = mu * v;
                    if t > -1.0 {
                        worst = worst.max(math::abs(math::ln_1p(t)));
                    }
                }
                worst > overflow
            }
            None => {
                let grid = self.spec.grid();
                let mut worst: f64 = 0.0;
                for idx in 0..grid.n_nodes() {
                    for k in 0..grid.dim() {
                        worst = worst.max(math::abs(self.spec.m.component(k, idx) * w.value(idx)));
                    }
                }
                worst > overflow
            }
        }
    }

    fn scaled_dist(&self, th: f64, a: &GridFunction, b: &GridFunction, la: f64, lb: f64) -> f64 {
        let d = a.axpy(-1.0, b);
        math::sqrt(th * th * self.wdot(&d, &d) + (la - lb) * (la - lb))
    }
}

/// Traces the branch of `spec`'s family over `lambda`, starting from a
/// converged solution (primal variable) at `opts.lambda_min`.
pub fn trace(spec: &ProblemSpec, start: &Solution, opts: &TraceOptions) -> Result<Branch> {
    if !start.converged() {
        return Err(CoreError::InvalidInput("continuation start must be converged".to_string()));
    }
    if !(opts.ds > 0.0) {
        return Err(CoreError::InvalidInput("ds must be positive".to_string()));
    }
    if spec.kind != ProblemKind::Primal {
        return Err(CoreError::InvalidInput("trace expects the primal spec".to_string()));
    }
    let substituted = match opts.formulation {
        Formulation::Direct => false,
        Formulation::Substituted => true,
        Formulation::Auto => match spec.m.constant_scalar().filter(|&m| m != 0.0) {
            Some(mu) => semilinear_problem(spec, &TransformSpec::for_mu(mu)?).is_ok(),
            None => false,
        },
    };
    let (work_spec, mu_sub, w0) = if substituted {
        let mu = spec.m.constant_scalar().filter(|&m| m != 0.0).ok_or_else(|| {
            CoreError::TransformInexact("substituted tracing needs constant nonzero mu".to_string())
        })?;
        let t = TransformSpec::for_mu(mu)?;
        let sspec = semilinear_problem(spec, &t)?;
        let w0 = crate::transform::forward(&start.u, &t)?;
        (sspec, Some(mu), w0)
    } else {
        (spec.clone(), None, start.u.clone())
    };

    let grid = spec.grid();
    let mesh_w: f64 = (0..grid.dim()).map(|k| grid.spacing()[k]).product();
    let tracer = Tracer {
        spec: work_spec,
        mu_sub,
        mesh_w,
        opts: opts.clone(),
        obs: opts.observation.unwrap_or_else(|| grid.centroid_node()),
    };

    let mut lambda = opts.lambda_min;
    let mut w = tracer
        .solve_at(lambda, &w0)
        .map_err(|_| {
            CoreError::InvalidInput("start does not solve the working formulation".to_string())
        })?
        .u;

    let mut points = Vec::new();
    let mut s = 0.0;
    let (mut tw, mut tl) = tracer.tangent(&w, lambda, None)?;
    if tl < 0.0 {
        tw = tw.map(|v| -v);
        tl = -tl;
    }
    points.push(tracer.make_point(s, lambda, &w, tl)?);

    let mut ds = opts.ds;
    let mut streak = 0usize;
    let mut termination = Termination::MaxSteps;
    let mut first_step = true;

    for _ in 0..opts.max_steps {
        let th = tracer.theta(&w);
        let w_pred = w.axpy(ds, &tw);
        let lambda_pred = lambda + ds * tl;
        let step = tracer
            .correct(w_pred.clone(), lambda_pred, &tw, tl, th, &w_pred, lambda_pred)
            .and_then(|(wn, ln)| {
                let dist = tracer.scaled_dist(th, &wn, &w, ln, lambda);
                // step-continuity guard: reject corrector jumps onto a
                // distant part of the solution set
                if dist > 3.0 * ds {
                    Err(CoreError::Diverged { iterations: 0, residual: dist })
                } else {
                    Ok((wn, ln, dist))
                }
            });
        match step {
            Ok((w_new, lambda_new, dist)) => {
                first_step = false;
                for &tau in &opts.targets {
                    if (lambda - tau) * (lambda_new - tau) < 0.0 {
                        let frac = (tau - lambda) / (lambda_new - lambda);
                        let seed_vals: Vec<f64> = w
                            .values()
                            .iter()
                            .zip(w_new.values())
                            .map(|(a, b)| a + frac * (b - a))
                            .collect();
                        if let Ok(seed) = GridFunction::from_values(w.grid(), seed_vals) {
                            if let Ok(sol) = tracer.solve_at(tau, &seed) {
                                let st = s + tracer.scaled_dist(th, &sol.u, &w, tau, lambda);
                                points.push(tracer.make_point(st, tau, &sol.u, tl)?);
                            }
                        }
                    }
                }
                s += dist;
                w = w_new;
                lambda = lambda_new;
                let (ntw, ntl) = match tracer.tangent(&w, lambda, Some((&tw, tl, th))) {
                    Ok(t) => t,
                    // singular Jacobian exactly at a fold: keep the secant
                    Err(_) => (tw.clone(), tl),
                };
                tw = ntw;
                tl = ntl;
                points.push(tracer.make_point(s, lambda, &w, tl)?);

                let sup_u = points.last().expect("nonempty").sup_u;
                if tracer.blown_up(&w, sup_u) {
                    termination = Termination::BlowUp;
                    break;
                }
                let past_max = lambda >= opts.lambda_max;
                let past_min = lambda <= opts.lambda_min && tl < 0.0;
                if past_max || past_min {
                    let edge = if past_max { opts.lambda_max } else { opts.lambda_min };
                    if lambda != edge {
                        if let Ok(sol) = tracer.solve_at(edge, &w) {
                            let se = s + tracer.scaled_dist(th, &sol.u, &w, edge, lambda);
                            points.push(tracer.make_point(se, edge, &sol.u, tl)?);
                        }
                    }
                    termination = Termination::RangeEnd;
                    break;
                }
                streak += 1;
                if streak >= 3 {
                    ds = (ds * 1.3).min(opts.ds_max);
                    streak = 0;
                }
            }
            Err(e) => {
                if first_step {
                    return Err(e);
                }
                streak = 0;
                ds *= 0.5;
                if ds < opts.ds_min {
                    termination = Termination::StepFloor;
                    break;
                }
            }
        }
    }

    let folds = detect_folds_points(&points);
    Ok(Branch { points, folds, termination })
}

fn detect_folds_points(points: &[BranchPoint]) -> Vec<(usize, f64)> {
    let mut folds = Vec::new();
    for i in 0..points.len().saturating_sub(1) {
        let (a, b) = (points[i].tangent_lambda, points[i + 1].tangent_lambda);
        if a == 0.0 || b == 0.0 || a.signum() == b.signum() {
            continue;
        }
        let tri: [usize; 3] =
            if i == 0 { [0, 1, 2.min(points.len() - 1)] } else { [i - 1, i, i + 1] };
        let lam = quadratic_extremum(
            points[tri[0]].s,
            points[tri[0]].lambda,
            points[tri[1]].s,
            points[tri[1]].lambda,
            points[tri[2]].s,
            points[tri[2]].lambda,
        )
        .unwrap_or(points[i].lambda);
        folds.push((i, lam));
    }
    folds
}

/// Extremum value of the parabola through three samples of `lambda(s)`.
fn quadratic_extremum(s0: f64, l0: f64, s1: f64, l1: f64, s2: f64, l2: f64) -> Option<f64> {
    let d01 = (l1 - l0) / (s1 - s0);
    let d12 = (l2 - l1) / (s2 - s1);
    let a = (d12 - d01) / (s2 - s0);
    if a == 0.0 || !a.is_finite() {
        return None;
    }
    let sstar = 0.5 * (s0 + s1 - d01 / a);
    Some(l0 + d01 * (sstar - s0) + a * (sstar - s0) * (sstar - s1))
}

/// Fold annotations of a branch: indices where the tangent's
/// lambda-component changes sign, with interpolated fold locations.
pub fn detect_folds(branch: &Branch) -> Vec<(usize, f64)> {
    detect_folds_points(&branch.points)
}

/// Asymptote estimate: linear extrapolation of `lambda` against `1/m(u)`
/// over the trailing points, to `1/m = 0`.
pub fn blowup_asymptote(branch: &Branch, tail: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = branch
        .points
        .iter()
        .rev()
        .take(tail)
        .filter(|p| p.m_u > 0.0)
        .map(|p| (1.0 / p.m_u, p.lambda))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let det = n * sxx - sx * sx;
    if det == 0.0 {
        return None;
    }
    Some((sy * sxx - sx * sxy) / det)
}

/// Classifies a traced branch against the three diagram shapes. The
/// hypotheses (`h >= 0`, start from the `lambda = 0` solution) are the
/// caller's responsibility; insufficient branch extent is reported as
/// inconclusive, never guessed.
pub fn classify(branch: &Branch, lambda1: f64, margin: f64) -> Result<DiagramClass> {
    let folds = &branch.folds;
    let last = branch
        .points
        .last()
        .ok_or_else(|| CoreError::Inconclusive("empty branch".to_string()))?;
    match (folds.is_empty(), branch.termination) {
        (false, Termination::BlowUp) => {
            let fold_lambda = folds[0].1;
            if last.lambda < fold_lambda {
                Ok(DiagramClass {
                    kind: DiagramKind::FoldWithBlowupTowardZero,
                    fold_lambda: Some(fold_lambda),
                    blowup_lambda: Some(last.lambda),
                    asymptote: None,
                    lambda1,
                })
            } else {
                Err(CoreError::Inconclusive(
                    "fold detected but blow-up not past the fold".to_string(),
                ))
            }
        }
        (true, Termination::BlowUp) => Ok(DiagramClass {
            kind: DiagramKind::BlowupAtPrincipalEigenvalue,
            fold_lambda: None,
            blowup_lambda: Some(last.lambda),
            asymptote: blowup_asymptote(branch, 6),
            lambda1,
        }),
        (true, Termination::RangeEnd) => {
            if last.lambda >= lambda1 + margin {
                Ok(DiagramClass {
                    kind: DiagramKind::ThroughPrincipalEigenvalue,
                    fold_lambda: None,
                    blowup_lambda: None,
                    asymptote: None,
                    lambda1,
                })
            } else {
                Err(CoreError::Inconclusive(alloc::format!(
                    "branch ends at lambda = {} without reaching lambda1 + margin = {}",
                    last.lambda,
                    lambda1 + margin
                )))
            }
        }
        _ => Err(CoreError::Inconclusive(alloc::format!(
            "termination {:?} with {} folds does not match a diagram",
            branch.termination,
            folds.len()
        ))),
    }
}

/// Convenience: plain Newton at `lambda_min`, then trace.
pub fn trace_from_flat_start(spec: &ProblemSpec, opts: &TraceOptions) -> Result<Branch> {
    let base = spec.with_lambda(opts.lambda_min);
    let start = newton(&base, &base.flat_start(), &opts.newton)?;
    if !start.converged() {
        return Err(CoreError::Diverged {
            iterations: start.iterations,
            residual: start.residual_norm,
        });
    }
    trace(&base, &start, opts)
}

impl TransformSpec {
    /// Positive- or negative-case substitution matching the sign of `mu`.
    pub fn for_mu(mu: f64) -> Result<TransformSpec> {
        if mu >= 0.0 {
            TransformSpec::positive(mu)
        } else {
            TransformSpec::negative(-mu)
        }
    }
}

/// Stable string form of a diagram kind, used by reports.
pub fn diagram_name(kind: DiagramKind) -> &'static str {
    match kind {
        DiagramKind::FoldWithBlowupTowardZero => "fold-with-blowup-toward-zero",
        DiagramKind::BlowupAtPrincipalEigenvalue => "blowup-at-lambda1",
        DiagramKind::ThroughPrincipalEigenvalue => "through-lambda1",
    }
}
