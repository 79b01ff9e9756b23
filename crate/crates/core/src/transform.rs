//! Exponential changes of the dependent variable that remove the quadratic
//! gradient term, and the reduction to nonnegative data.
//!
//! Positive case: `v = (e^{mu u} - 1)/mu`, increasing in `u`, `v > -1/mu`.
//! Negative case: `v = (1 - e^{-mu1 u})/mu1`, increasing in `u`, `v < 1/mu1`;
//! this is the positive-case formula evaluated at `-mu1`. The printed source
//! formula for the negative case carries an index/sign ambiguity; the
//! convention here is fixed by requiring monotonicity in `u` and `v < 1/mu1`.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::grid::GridFunction;
use crate::math;
use crate::operators::{
    assemble_linear, gradient_component, ProblemKind, ProblemSpec, SubstitutionScheme,
};
use crate::solver::linear_solve;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformDirection {
    /// `v = (e^{mu u} - 1)/mu`.
    Positive,
    /// `v = (1 - e^{-mu u})/mu`.
    Negative,
}

/// Parameters of one exponential substitution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformSpec {
    pub mu_scalar: f64,
    pub direction: TransformDirection,
    /// Set when `|mu| < 1e-8`: the identity transform is substituted and the
    /// caller should surface a warning.
    pub identity_substituted: bool,
}

impl TransformSpec {
    pub fn positive(mu: f64) -> Result<Self> {
        if mu == 0.0 || !mu.is_finite() {
            return Err(CoreError::InvalidInput("substitution needs mu != 0".to_string()));
        }
        Ok(TransformSpec {
            mu_scalar: mu,
            direction: TransformDirection::Positive,
            identity_substituted: math::abs(mu) < 1e-8,
        })
    }

    pub fn negative(mu1: f64) -> Result<Self> {
        if !(mu1 > 0.0) {
            return Err(CoreError::InvalidInput("negative case needs mu1 > 0".to_string()));
        }
        Ok(TransformSpec {
            mu_scalar: mu1,
            direction: TransformDirection::Negative,
            identity_substituted: mu1 < 1e-8,
        })
    }

    /// The signed parameter the formulas are evaluated at.
    pub fn effective_mu(&self) -> f64 {
        match self.direction {
            TransformDirection::Positive => self.mu_scalar,
            TransformDirection::Negative => -self.mu_scalar,
        }
    }
}

/// `v = (e^{mu u} - 1)/mu`, pointwise. Overflow of `mu*u` past 700 is a
/// blow-up signal, not a silent infinity.
pub fn forward(u: &GridFunction, t: &TransformSpec) -> Result<GridFunction> {
    if t.identity_substituted {
        return Ok(u.clone());
    }
    let mu = t.effective_mu();
    let grid = u.grid().clone();
    let mut vals = Vec::with_capacity(grid.n_nodes());
    for idx in 0..grid.n_nodes() {
        let e = mu * u.value(idx);
        if e > 700.0 {
            return Err(CoreError::BlowUp { node: idx, value: e });
        }
        vals.push(math::exp_m1(e) / mu);
    }
    GridFunction::from_values(&grid, vals)
}

/// Inverse substitution `u = log(1 + mu v)/mu`; requires `1 + mu v > 0`.
pub fn inverse(v: &GridFunction, t: &TransformSpec) -> Result<GridFunction> {
    if t.identity_substituted {
        return Ok(v.clone());
    }
    let mu = t.effective_mu();
    let grid = v.grid().clone();
    let mut vals = Vec::with_capacity(grid.n_nodes());
    for idx in 0..grid.n_nodes() {
        let e = mu * v.value(idx);
        if e <= -1.0 {
            return Err(CoreError::TransformDomain { node: idx, value: 1.0 + e });
        }
        vals.push(math::ln_1p(e) / mu);
    }
    GridFunction::from_values(&grid, vals)
}

fn constant_mu_matching(spec: &ProblemSpec, t: &TransformSpec) -> Result<f64> {
    if spec.kind != ProblemKind::Primal {
        return Err(CoreError::TransformInexact("problem is already substituted".to_string()));
    }
    let mu = spec.m.constant_scalar().ok_or_else(|| {
        CoreError::TransformInexact(
            "mu varies over the grid; use the two-sided envelope (inf mu, sup mu) on a region"
                .to_string(),
        )
    })?;
    let te = t.effective_mu();
    if math::abs(mu - te) > 1e-14 * math::abs(mu).max(1.0) {
        return Err(CoreError::InvalidInput(
            "substitution parameter must equal the problem's constant mu".to_string(),
        ));
    }
    if mu == 0.0 {
        return Err(CoreError::TransformInexact("mu = 0 has nothing to remove".to_string()));
    }
    Ok(mu)
}

/// Problem in the substituted variable whose residual at `forward(u)` equals
/// `(1 + mu v) = e^{mu u}` times the residual of the original at `u`, exactly
/// on the discrete level; zeros map to zeros. Requires constant `mu`.
pub fn transformed_problem(spec: &ProblemSpec, t: &TransformSpec) -> Result<ProblemSpec> {
    let mu = constant_mu_matching(spec, t)?;
    let mut out = spec.clone();
    out.kind = ProblemKind::Substituted { mu, scheme: SubstitutionScheme::ExactComposition };
    Ok(out)
}

/// Consistent stencil discretization of the substituted equation
/// `-L0 v = lambda c (1+mu v) log(1+mu v)/mu + (1+mu v) h`.
/// Exactness of the substitution additionally needs `a = I` (any drift is
/// fine); second-order accurate and robust for steep primal solutions.
pub fn semilinear_problem(spec: &ProblemSpec, t: &TransformSpec) -> Result<ProblemSpec> {
    let mu = constant_mu_matching(spec, t)?;
    let grid = spec.grid();
    for idx in 0..grid.n_nodes() {
        let [a11, a22, a12] = spec.coeffs.a.at(idx);
        let identity = a11 == 1.0 && a12 == 0.0 && (grid.dim() == 1 || a22 == 1.0);
        if !identity {
            return Err(CoreError::TransformInexact(
                "semilinear substitution requires identity second-order part".to_string(),
            ));
        }
    }
    let mut out = spec.clone();
    out.kind = ProblemKind::Substituted { mu, scheme: SubstitutionScheme::Semilinear };
    Ok(out)
}

/// Exponent `A = mu2/mu1` relating the two substituted fields,
/// `v2 ~ v1^A` for large `u`.
pub fn derived_exponent(t1: &TransformSpec, t2: &TransformSpec) -> Result<f64> {
    if t1.direction != TransformDirection::Positive || t2.direction != TransformDirection::Positive
    {
        return Err(CoreError::InvalidInput("exponent relation needs positive-case pair".to_string()));
    }
    let (m1, m2) = (t1.mu_scalar, t2.mu_scalar);
    if m1 == 0.0 {
        return Err(CoreError::InvalidInput("mu1 must be nonzero".to_string()));
    }
    if !(m1 > 0.0 && m2 >= m1) {
        return Err(CoreError::InvalidInput("need 0 < mu1 <= mu2".to_string()));
    }
    Ok(m2 / m1)
}

/// Shifts the problem by the solution `psi` of the linear part
/// `-L0 psi = lambda c psi + h` (same boundary data), completing the square
/// in the gradient term. `u` solves the original problem iff `v = u - psi`
/// solves the returned spec, which has zero boundary data, drift
/// `b + 2 M grad(psi)` and source `<M grad psi, grad psi> >= 0` for `M >= 0`.
///
/// All derivatives of `psi` are taken with the same central stencils as the
/// residual, so the two solution paths agree to solver accuracy, not just to
/// discretization order.
pub fn reduce_to_positive(spec: &ProblemSpec) -> Result<(ProblemSpec, GridFunction)> {
    if spec.kind != ProblemKind::Primal {
        return Err(CoreError::InvalidInput("reduction applies to the primal form".to_string()));
    }
    if spec.upwind {
        return Err(CoreError::InvalidInput(
            "reduction requires the central drift discretization".to_string(),
        ));
    }
    let grid = spec.grid().clone();
    let psi = linear_solve(&assemble_linear(spec)?)?;
    let grads: Vec<GridFunction> =
        (0..grid.dim()).map(|k| gradient_component(&grid, &psi, k)).collect();

    let mut b = spec.coeffs.b.clone();
    let mut h_extra = GridFunction::zeros(&grid);
    for k in 0..grid.dim() {
        let mut bv = b[k].values().to_vec();
        for idx in 0..grid.n_nodes() {
            let mk = spec.m.component(k, idx);
            let dk = grads[k].value(idx);
            bv[idx] += 2.0 * mk * dk;
            h_extra.values_mut()[idx] += mk * dk * dk;
        }
        b[k] = GridFunction::from_values(&grid, bv)?;
    }
    let mut out = spec.clone();
    out.coeffs.b = b;
    out.h = h_extra;
    out.g = GridFunction::zeros(&grid);
    Ok((out, psi))
}
