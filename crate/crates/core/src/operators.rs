//! The linear operator `L0 u = a_ij ∂_ij u + b_i ∂_i u`, the full nonlinear
//! residual, and its Jacobian, discretized with second-order central
//! differences (optional first-order upwinding of the drift).
//!
//! Interior unknowns are ordered lexicographically; Dirichlet values are
//! eliminated into the right-hand side at assembly time.

use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::grid::{Grid, GridFunction};
use crate::linalg::BandMatrix;
use crate::math;

/// Declared bounds a coefficient family is sampled under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientBounds {
    /// Lower ellipticity constant (smallest admissible eigenvalue of `a`).
    pub lambda_ell: f64,
    /// Upper ellipticity constant.
    pub big_lambda_ell: f64,
    /// Bound on `|b(x)|`.
    pub sup_b: f64,
}

/// Per-node symmetric coefficient matrix `a(x)`; entries `[a11, a22, a12]`
/// (only `a11` is read in 1D).
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    grid: Arc<Grid>,
    entries: Vec<[f64; 3]>,
}

impl MatrixField {
    pub fn identity(grid: &Arc<Grid>) -> Self {
        MatrixField { grid: grid.clone(), entries: vec![[1.0, 1.0, 0.0]; grid.n_nodes()] }
    }

    pub fn isotropic(scale: &GridFunction) -> Self {
        let grid = scale.grid().clone();
        let entries = scale.values().iter().map(|&s| [s, s, 0.0]).collect();
        MatrixField { grid, entries }
    }

    pub fn diagonal(a11: &GridFunction, a22: &GridFunction) -> Self {
        debug_assert!(a11.same_grid(a22));
        let grid = a11.grid().clone();
        let entries =
            a11.values().iter().zip(a22.values()).map(|(&x, &y)| [x, y, 0.0]).collect();
        MatrixField { grid, entries }
    }

    /// Entries `[a11, a22, a12]` from a coordinate function.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> [f64; 3]) -> Self {
        let entries = (0..grid.n_nodes())
            .map(|idx| {
                let c = grid.coord(idx);
                f(&c[..grid.dim()])
            })
            .collect();
        MatrixField { grid: grid.clone(), entries }
    }

    /// Per-node entry table `[a11, a22, a12]`.
    pub fn from_entries(grid: &Arc<Grid>, entries: Vec<[f64; 3]>) -> Result<Self> {
        if entries.len() != grid.n_nodes() {
            return Err(CoreError::GridMismatch);
        }
        Ok(MatrixField { grid: grid.clone(), entries })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    #[inline]
    pub fn at(&self, idx: usize) -> [f64; 3] {
        self.entries[idx]
    }

    /// Eigenvalues of the node's symmetric matrix (equal in 1D).
    #[inline]
    pub fn eigenvalues(&self, idx: usize) -> (f64, f64) {
        let [a11, a22, a12] = self.entries[idx];
        if self.grid.dim() == 1 {
            (a11, a11)
        } else {
            let mean = 0.5 * (a11 + a22);
            let rad = math::hypot(0.5 * (a11 - a22), a12);
            (mean - rad, mean + rad)
        }
    }
}

/// `a` and `b` of `L0`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorCoefficients {
    pub a: MatrixField,
    /// One drift component per axis.
    pub b: Vec<GridFunction>,
}

impl OperatorCoefficients {
    pub fn laplacian(grid: &Arc<Grid>) -> Self {
        OperatorCoefficients {
            a: MatrixField::identity(grid),
            b: (0..grid.dim()).map(|_| GridFunction::zeros(grid)).collect(),
        }
    }

    pub fn new(a: MatrixField, b: Vec<GridFunction>) -> Result<Self> {
        let grid = a.grid().clone();
        if b.len() != grid.dim() {
            return Err(CoreError::InvalidInput("need one drift component per axis".to_string()));
        }
        for comp in &b {
            if !(**comp.grid() == *grid) {
                return Err(CoreError::GridMismatch);
            }
        }
        Ok(OperatorCoefficients { a, b })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.a.grid()
    }

    /// Pointwise Euclidean norm of the drift, maximized over the grid.
    pub fn sup_b(&self) -> f64 {
        let n = self.grid().n_nodes();
        let mut sup: f64 = 0.0;
        for idx in 0..n {
            let mut s = 0.0;
            for comp in &self.b {
                s += comp.value(idx) * comp.value(idx);
            }
            sup = sup.max(math::sqrt(s));
        }
        sup
    }
}

/// Per-node eigenvalue extremes of `a(x)`; errors if ellipticity is lost,
/// naming the node.
pub fn check_ellipticity(coeffs: &OperatorCoefficients) -> Result<(f64, f64)> {
    let grid = coeffs.grid();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for idx in 0..grid.n_nodes() {
        let (emin, emax) = coeffs.a.eigenvalues(idx);
        if emin <= 0.0 {
            return Err(CoreError::NotElliptic { node: idx, eigenvalue: emin });
        }
        lo = lo.min(emin);
        hi = hi.max(emax);
    }
    Ok((lo, hi))
}

/// The gradient-term coefficient `M(x)`: scalar multiple of the identity or
/// a per-axis diagonal.
#[derive(Debug, Clone, PartialEq)]
pub enum MField {
    Scalar(GridFunction),
    Diagonal(Vec<GridFunction>),
}

impl MField {
    #[inline]
    pub fn component(&self, axis: usize, idx: usize) -> f64 {
        match self {
            MField::Scalar(f) => f.value(idx),
            MField::Diagonal(fs) => fs[axis].value(idx),
        }
    }

    pub fn sup_abs(&self) -> f64 {
        match self {
            MField::Scalar(f) => f.sup_norm(),
            MField::Diagonal(fs) => fs.iter().fold(0.0f64, |m, f| m.max(f.sup_norm())),
        }
    }

    /// `Some(mu)` when `M = mu * I` with the same constant at every node.
    pub fn constant_scalar(&self) -> Option<f64> {
        match self {
            MField::Scalar(f) => {
                let v0 = f.value(0);
                f.values().iter().all(|&v| v == v0).then_some(v0)
            }
            MField::Diagonal(fs) => {
                let v0 = fs[0].value(0);
                fs.iter().all(|f| f.values().iter().all(|&v| v == v0)).then_some(v0)
            }
        }
    }
}

/// How the residual interprets the stored fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemKind {
    /// `-L0 u = lambda c u + <M grad u, grad u> + h` in the original variable.
    Primal,
    /// Exponentially substituted unknown `v = (e^{mu u} - 1)/mu`.
    Substituted { mu: f64, scheme: SubstitutionScheme },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubstitutionScheme {
    /// Residual defined by exact composition with the primal stencil:
    /// `R_v(v) = (1 + mu v) * R_u(log(1 + mu v)/mu)`. Root sets of the two
    /// formulations coincide exactly on the discrete level.
    ExactComposition,
    /// Consistent semilinear discretization
    /// `-L0 v = lambda c (1+mu v) log(1+mu v)/mu + (1+mu v) h`.
    /// Requires `a = I`; second-order accurate for the substituted equation
    /// and robust for steep solutions of the primal one.
    Semilinear,
}

/// Full data of the Dirichlet problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    grid: Arc<Grid>,
    pub coeffs: OperatorCoefficients,
    pub c: GridFunction,
    pub m: MField,
    pub h: GridFunction,
    /// Boundary data in the primal variable (interior entries ignored).
    pub g: GridFunction,
    pub lambda: f64,
    pub kind: ProblemKind,
    pub upwind: bool,
}

impl ProblemSpec {
    pub fn new(
        coeffs: OperatorCoefficients,
        c: GridFunction,
        m: MField,
        h: GridFunction,
        g: GridFunction,
        lambda: f64,
    ) -> Result<Self> {
        let grid = coeffs.grid().clone();
        for f in [&c, &h, &g] {
            if !(**f.grid() == *grid) {
                return Err(CoreError::GridMismatch);
            }
            f.check_finite()?;
        }
        match &m {
            MField::Scalar(f) => {
                if !(**f.grid() == *grid) {
                    return Err(CoreError::GridMismatch);
                }
            }
            MField::Diagonal(fs) => {
                if fs.len() != grid.dim() {
                    return Err(CoreError::InvalidInput(
                        "diagonal M needs one entry per axis".to_string(),
                    ));
                }
            }
        }
        Ok(ProblemSpec { grid, coeffs, c, m, h, g, lambda, kind: ProblemKind::Primal, upwind: false })
    }

    /// Model problem `-Δu = lambda c u + mu |grad u|^2 + h`, zero boundary data.
    pub fn model(
        grid: &Arc<Grid>,
        c: GridFunction,
        mu: GridFunction,
        h: GridFunction,
        lambda: f64,
    ) -> Result<Self> {
        ProblemSpec::new(
            OperatorCoefficients::laplacian(grid),
            c,
            MField::Scalar(mu),
            h,
            GridFunction::zeros(grid),
            lambda,
        )
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        let mut s = self.clone();
        s.lambda = lambda;
        s
    }

    /// Nodes where `c` does not vanish.
    pub fn c_support(&self) -> Vec<usize> {
        (0..self.grid.n_nodes()).filter(|&i| self.c.value(i) != 0.0).collect()
    }

    /// True when `|M| >= mu1` everywhere `c` is nonzero (the hypothesis under
    /// which the two-solution structure is guaranteed).
    pub fn support_overlap(&self, mu1: f64) -> bool {
        self.c_support().iter().all(|&idx| {
            (0..self.grid.dim()).all(|k| math::abs(self.m.component(k, idx)) >= mu1)
        })
    }

    /// Boundary values in the solve variable (substituted kinds transform `g`).
    pub fn solve_boundary_values(&self) -> Vec<f64> {
        let n = self.grid.n_nodes();
        let mut vals = vec![0.0; n];
        for idx in self.grid.boundary_nodes() {
            let gv = self.g.value(idx);
            vals[idx] = match self.kind {
                ProblemKind::Primal => gv,
                ProblemKind::Substituted { mu, .. } => math::exp_m1(mu * gv) / mu,
            };
        }
        vals
    }

    /// Boundary-consistent starting iterate (zero in the interior).
    pub fn flat_start(&self) -> GridFunction {
        GridFunction::from_values(&self.grid, self.solve_boundary_values()).expect("finite")
    }

    fn check_boundary(&self, u: &GridFunction) -> Result<()> {
        let vals = self.solve_boundary_values();
        for idx in self.grid.boundary_nodes() {
            let dev = math::abs(u.value(idx) - vals[idx]);
            if dev > 1e-10 {
                return Err(CoreError::BoundaryMismatch { node: idx, deviation: dev });
            }
        }
        Ok(())
    }
}

/// Square banded system over interior nodes with Dirichlet lifting applied.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub band: BandMatrix,
    pub rhs: Vec<f64>,
    grid: Arc<Grid>,
    /// Flat node index of each interior unknown, in row order.
    interior: Vec<usize>,
    /// Full-length vector of the values the solution takes on the boundary.
    boundary_values: Vec<f64>,
}

impl SparseSystem {
    pub fn n_unknowns(&self) -> usize {
        self.interior.len()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary_values(&self) -> &[f64] {
        &self.boundary_values
    }

    /// Gathers a full grid function into the interior unknown ordering.
    pub fn gather(&self, f: &GridFunction) -> Vec<f64> {
        self.interior.iter().map(|&idx| f.value(idx)).collect()
    }

    /// Scatters interior values into a full grid function, boundary filled
    /// from the stored boundary values.
    pub fn scatter(&self, x: &[f64]) -> Result<GridFunction> {
        let mut vals = self.boundary_values.clone();
        for (r, &idx) in self.interior.iter().enumerate() {
            vals[idx] = x[r];
        }
        GridFunction::from_values(&self.grid, vals)
    }

    /// Sign pattern of an M-matrix: positive diagonal, nonpositive
    /// off-diagonal entries.
    pub fn is_m_pattern(&self) -> bool {
        let n = self.n_unknowns();
        for i in 0..n {
            if !(self.band.get(i, i) > 0.0) {
                return false;
            }
            for j in 0..n {
                if i != j && self.band.get(i, j) > 0.0 {
                    return false;
                }
            }
        }
        true
    }
}

struct Layout {
    interior: Vec<usize>,
    row_of: Vec<Option<usize>>,
    klu: usize,
}

fn layout(grid: &Grid) -> Layout {
    let interior: Vec<usize> = grid.interior_nodes().collect();
    let mut row_of = vec![None; grid.n_nodes()];
    for (r, &idx) in interior.iter().enumerate() {
        row_of[idx] = Some(r);
    }
    let klu = if grid.dim() == 1 { 1 } else { grid.counts()[0] - 2 + 1 };
    Layout { interior, row_of, klu }
}

/// Stencil of `-L0` at one interior node: (diagonal, neighbor contributions
/// as (flat index, coefficient)).
fn minus_l0_row(
    coeffs: &OperatorCoefficients,
    upwind: bool,
    idx: usize,
    out: &mut Vec<(usize, f64)>,
) -> f64 {
    let grid = coeffs.grid();
    let [hx, hy] = grid.spacing();
    let nx = grid.counts()[0];
    let dim = grid.dim();
    let [a11, a22, a12] = coeffs.a.at(idx);
    out.clear();
    let mut diag = 0.0;

    // second-order part, axis by axis
    let axes: [(usize, f64, f64); 2] = [(1, hx, a11), (nx, hy, a22)];
    for k in 0..dim {
        let (stride, h, akk) = axes[k];
        diag += 2.0 * akk / (h * h);
        out.push((idx - stride, -akk / (h * h)));
        out.push((idx + stride, -akk / (h * h)));
        // drift
        let bk = coeffs.b[k].value(idx);
        if bk != 0.0 {
            if upwind {
                if bk > 0.0 {
                    // forward difference keeps the off-diagonal nonpositive
                    diag += bk / h;
                    out.push((idx + stride, -bk / h));
                } else {
                    diag += -bk / h;
                    out.push((idx - stride, bk / h));
                }
            } else {
                out.push((idx + stride, -bk / (2.0 * h)));
                out.push((idx - stride, bk / (2.0 * h)));
            }
        }
    }

    // mixed derivative (four-corner second-order stencil)
    if dim == 2 && a12 != 0.0 {
        let w = 2.0 * a12 / (4.0 * hx * hy);
        out.push((idx + 1 + nx, -w));
        out.push((idx - 1 - nx, -w));
        out.push((idx + 1 - nx, w));
        out.push((idx - 1 + nx, w));
    }

    diag
}

fn peclet_check(spec: &ProblemSpec) -> Result<()> {
    if spec.upwind {
        return Ok(());
    }
    let grid = &spec.grid;
    let mut worst: f64 = 0.0;
    for idx in grid.interior_nodes() {
        let a = spec.coeffs.a.at(idx);
        for k in 0..grid.dim() {
            let akk = a[k];
            let bk = math::abs(spec.coeffs.b[k].value(idx));
            if bk > 0.0 {
                worst = worst.max(grid.spacing()[k] * bk / (2.0 * akk));
            }
        }
    }
    if worst >= 1.0 {
        return Err(CoreError::PecletExceeded { peclet: worst });
    }
    Ok(())
}

/// Assembles `-L0 - lambda c` on interior nodes with Dirichlet elimination;
/// right-hand side is `h` plus the lifted boundary terms.
pub fn assemble_linear(spec: &ProblemSpec) -> Result<SparseSystem> {
    peclet_check(spec)?;
    let grid = &spec.grid;
    let lay = layout(grid);
    let n = lay.interior.len();
    let mut band = BandMatrix::zeros(n, lay.klu, lay.klu);
    let boundary_values = spec.solve_boundary_values();
    let mut rhs = vec![0.0; n];
    let mut nbrs = Vec::with_capacity(12);
    for (r, &idx) in lay.interior.iter().enumerate() {
        let diag =
            minus_l0_row(&spec.coeffs, spec.upwind, idx, &mut nbrs) - spec.lambda * spec.c.value(idx);
        band.add(r, r, diag);
        rhs[r] += spec.h.value(idx);
        for &(nbr, coeff) in &nbrs {
            match lay.row_of[nbr] {
                Some(col) => band.add(r, col, coeff),
                None => rhs[r] -= coeff * boundary_values[nbr],
            }
        }
    }
    Ok(SparseSystem { band, rhs, grid: grid.clone(), interior: lay.interior, boundary_values })
}

/// Matrix-free application of `-L0` to a full grid function. The stencil is
/// evaluated at interior nodes; boundary nodes copy the value of the nearest
/// interior node so that region quadrature over boxes touching the boundary
/// stays well defined.
pub fn apply_minus_l0(
    coeffs: &OperatorCoefficients,
    upwind: bool,
    u: &GridFunction,
) -> GridFunction {
    let grid = coeffs.grid();
    let mut vals = vec![0.0; grid.n_nodes()];
    let mut nbrs = Vec::with_capacity(12);
    for idx in grid.interior_nodes() {
        let diag = minus_l0_row(coeffs, upwind, idx, &mut nbrs);
        let mut acc = diag * u.value(idx);
        for &(nbr, coeff) in &nbrs {
            acc += coeff * u.value(nbr);
        }
        vals[idx] = acc;
    }
    let [nx, ny] = grid.counts();
    for idx in grid.boundary_nodes() {
        let [i, j] = grid.multi_index(idx);
        let ci = i.clamp(1, nx - 2);
        let cj = if grid.dim() == 2 { j.clamp(1, ny - 2) } else { j };
        vals[idx] = vals[grid.index(ci, cj)];
    }
    GridFunction::from_values(grid, vals).expect("stencil of finite field")
}

/// Central-difference gradient component along `axis` (one-sided on the
/// boundary; boundary values are never read back by the interior stencils).
pub fn gradient_component(grid: &Grid, u: &GridFunction, axis: usize) -> GridFunction {
    let stride = if axis == 0 { 1 } else { grid.counts()[0] };
    let h = grid.spacing()[axis];
    let count = grid.counts()[axis];
    let mut vals = vec![0.0; grid.n_nodes()];
    for idx in 0..grid.n_nodes() {
        let pos = grid.multi_index(idx)[axis];
        vals[idx] = if pos == 0 {
            (u.value(idx + stride) - u.value(idx)) / h
        } else if pos == count - 1 {
            (u.value(idx) - u.value(idx - stride)) / h
        } else {
            (u.value(idx + stride) - u.value(idx - stride)) / (2.0 * h)
        };
    }
    GridFunction::from_values(u.grid(), vals).expect("finite")
}

fn primal_residual(spec: &ProblemSpec, u: &GridFunction) -> Result<(GridFunction, f64)> {
    let grid = &spec.grid;
    let minus_l0 = apply_minus_l0(&spec.coeffs, spec.upwind, u);
    let grads: Vec<GridFunction> =
        (0..grid.dim()).map(|k| gradient_component(grid, u, k)).collect();
    let mut vals = vec![0.0; grid.n_nodes()];
    let mut scale: f64 = 0.0;
    for idx in grid.interior_nodes() {
        let mut quad = 0.0;
        for (k, gk) in grads.iter().enumerate() {
            let d = gk.value(idx);
            quad += spec.m.component(k, idx) * d * d;
        }
        let parts = [
            minus_l0.value(idx),
            spec.lambda * spec.c.value(idx) * u.value(idx),
            quad,
            spec.h.value(idx),
        ];
        scale = scale.max(parts.iter().map(|p| math::abs(*p)).sum());
        vals[idx] = parts[0] - parts[1] - parts[2] - parts[3];
    }
    Ok((GridFunction::from_values(grid, vals)?, scale))
}

/// Primal iterate recovered from a substituted one; errors where
/// `1 + mu v <= 0`.
pub fn primal_from_substituted(v: &GridFunction, mu: f64) -> Result<GridFunction> {
    let grid = v.grid().clone();
    let mut vals = Vec::with_capacity(grid.n_nodes());
    for idx in 0..grid.n_nodes() {
        let t = mu * v.value(idx);
        if t <= -1.0 {
            return Err(CoreError::TransformDomain { node: idx, value: 1.0 + t });
        }
        vals.push(math::ln_1p(t) / mu);
    }
    GridFunction::from_values(&grid, vals)
}

/// Nonlinear residual of the problem in its own solve variable; zero on the
/// boundary rows. Zero residual is equivalent to a discrete solution.
pub fn residual(spec: &ProblemSpec, u: &GridFunction) -> Result<GridFunction> {
    residual_and_scale(spec, u).map(|(r, _)| r)
}

/// Residual together with the sup over nodes of the sum of the magnitudes of
/// its terms. The scale is the natural yardstick for convergence: at large
/// field amplitudes the stencil's rounding floor grows with it and an
/// absolute tolerance becomes unattainable.
pub fn residual_and_scale(spec: &ProblemSpec, u: &GridFunction) -> Result<(GridFunction, f64)> {
    spec.check_boundary(u)?;
    match spec.kind {
        ProblemKind::Primal => primal_residual(spec, u),
        ProblemKind::Substituted { mu, scheme: SubstitutionScheme::ExactComposition } => {
            let u_prim = primal_from_substituted(u, mu)?;
            let base = ProblemSpec { kind: ProblemKind::Primal, ..spec.clone() };
            let (r, scale) = primal_residual(&base, &u_prim)?;
            let grid = &spec.grid;
            let mut vals = vec![0.0; grid.n_nodes()];
            let mut emax: f64 = 1.0;
            for idx in grid.interior_nodes() {
                let e = 1.0 + mu * u.value(idx);
                emax = emax.max(math::abs(e));
                vals[idx] = e * r.value(idx);
            }
            Ok((GridFunction::from_values(grid, vals)?, scale * emax))
        }
        ProblemKind::Substituted { mu, scheme: SubstitutionScheme::Semilinear } => {
            let grid = &spec.grid;
            let minus_l0 = apply_minus_l0(&spec.coeffs, spec.upwind, u);
            let mut vals = vec![0.0; grid.n_nodes()];
            let mut scale: f64 = 0.0;
            for idx in grid.interior_nodes() {
                let t = mu * u.value(idx);
                if t <= -1.0 {
                    return Err(CoreError::TransformDomain { node: idx, value: 1.0 + t });
                }
                let e = 1.0 + t;
                let gv = e * math::ln_1p(t) / mu;
                let parts = [
                    minus_l0.value(idx),
                    spec.lambda * spec.c.value(idx) * gv,
                    e * spec.h.value(idx),
                ];
                scale = scale.max(parts.iter().map(|p| math::abs(*p)).sum());
                vals[idx] = parts[0] - parts[1] - parts[2];
            }
            Ok((GridFunction::from_values(grid, vals)?, scale))
        }
    }
}

/// Derivative of the residual with respect to `lambda` at fixed `u`
/// (continuation's bordered system needs it).
pub fn dresidual_dlambda(spec: &ProblemSpec, u: &GridFunction) -> Result<GridFunction> {
    let grid = &spec.grid;
    let mut vals = vec![0.0; grid.n_nodes()];
    match spec.kind {
        ProblemKind::Primal => {
            for idx in grid.interior_nodes() {
                vals[idx] = -spec.c.value(idx) * u.value(idx);
            }
        }
        ProblemKind::Substituted { mu, scheme: SubstitutionScheme::ExactComposition } => {
            let u_prim = primal_from_substituted(u, mu)?;
            for idx in grid.interior_nodes() {
                vals[idx] = -(1.0 + mu * u.value(idx)) * spec.c.value(idx) * u_prim.value(idx);
            }
        }
        ProblemKind::Substituted { mu, scheme: SubstitutionScheme::Semilinear } => {
            for idx in grid.interior_nodes() {
                let t = mu * u.value(idx);
                if t <= -1.0 {
                    return Err(CoreError::TransformDomain { node: idx, value: 1.0 + t });
                }
                vals[idx] = -spec.c.value(idx) * (1.0 + t) * math::ln_1p(t) / mu;
            }
        }
    }
    GridFunction::from_values(grid, vals)
}

/// Fréchet derivative of `residual` at `u`, assembled in the band layout of
/// `assemble_linear`.
pub fn jacobian(spec: &ProblemSpec, u: &GridFunction) -> Result<SparseSystem> {
    spec.check_boundary(u)?;
    let grid = &spec.grid;
    let lay = layout(grid);
    let n = lay.interior.len();
    let mut band = BandMatrix::zeros(n, lay.klu, lay.klu);
    let rhs = vec![0.0; n];
    let mut nbrs = Vec::with_capacity(12);
    match spec.kind {
        ProblemKind::Primal => {
            let grads: Vec<GridFunction> =
                (0..grid.dim()).map(|k| gradient_component(grid, u, k)).collect();
            let [hx, hy] = grid.spacing();
            let nx = grid.counts()[0];
            for (r, &idx) in lay.interior.iter().enumerate() {
                let diag = minus_l0_row(&spec.coeffs, spec.upwind, idx, &mut nbrs)
                    - spec.lambda * spec.c.value(idx);
                // gradient coupling: -2 m_k (d_k u) d_k, central stencil
                let strides: [(usize, f64); 2] = [(1, hx), (nx, hy)];
                for k in 0..grid.dim() {
                    let (stride, h) = strides[k];
                    let w = 2.0 * spec.m.component(k, idx) * grads[k].value(idx) / (2.0 * h);
                    nbrs.push((idx + stride, -w));
                    nbrs.push((idx - stride, w));
                }
                band.add(r, r, diag);
                for &(nbr, coeff) in &nbrs {
                    if let Some(col) = lay.row_of[nbr] {
                        band.add(r, col, coeff);
                    }
                }
            }
        }
        ProblemKind::Substituted { mu, scheme: SubstitutionScheme::ExactComposition } => {
            let u_prim = primal_from_substituted(u, mu)?;
            let base = ProblemSpec { kind: ProblemKind::Primal, ..spec.clone() };
            let jp = jacobian(&base, &u_prim)?;
            let (rp, _) = primal_residual(&base, &u_prim)?;
            // rows/cols scaled by the substitution factor, plus the diagonal
            // term from differentiating the factor itself
            let e: Vec<f64> = lay.interior.iter().map(|&idx| 1.0 + mu * u.value(idx)).collect();
            for r in 0..n {
                for c in r.saturating_sub(lay.klu)..=(r + lay.klu).min(n - 1) {
                    let v = jp.band.get(r, c);
                    if v != 0.0 {
                        band.add(r, c, e[r] * v / e[c]);
                    }
                }
                band.add(r, r, mu * rp.value(lay.interior[r]));
            }
        }
        ProblemKind::Substituted { mu, scheme: SubstitutionScheme::Semilinear } => {
            for (r, &idx) in lay.interior.iter().enumerate() {
                let mut diag = minus_l0_row(&spec.coeffs, spec.upwind, idx, &mut nbrs);
                let t = mu * u.value(idx);
                if t <= -1.0 {
                    return Err(CoreError::TransformDomain { node: idx, value: 1.0 + t });
                }
                // d/dv [lambda c (1+mu v) log(1+mu v)/mu + (1+mu v) h]
                diag -= spec.lambda * spec.c.value(idx) * (math::ln_1p(t) + 1.0)
                    + mu * spec.h.value(idx);
                band.add(r, r, diag);
                for &(nbr, coeff) in &nbrs {
                    if let Some(col) = lay.row_of[nbr] {
                        band.add(r, col, coeff);
                    }
                }
            }
        }
    }
    Ok(SparseSystem {
        band,
        rhs,
        grid: grid.clone(),
        interior: lay.interior,
        // corrections vanish on the boundary
        boundary_values: vec![0.0; grid.n_nodes()],
    })
}
