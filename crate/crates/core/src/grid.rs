//! Structured grids on intervals and rectangles with boundary classification
//! and discrete integration/norm utilities.
//!
//! The face `x_n = 0` (last coordinate) is distinguished: it is the flat
//! boundary portion used by the boundary inequalities. It is still a
//! Dirichlet face for solves.

use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::math;

/// Classification of a grid node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Interior,
    /// Boundary node on a face other than `x_n = 0`.
    Dirichlet,
    /// Boundary node on the face `x_n = 0`.
    FlatPortion,
}

/// Uniform tensor grid on `[0, L_1] x ... x [0, L_d]`, `d` = 1 or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    extents: [f64; 2],
    counts: [usize; 2],
    spacing: [f64; 2],
    class: Vec<NodeClass>,
}

impl Grid {
    /// Builds a grid with `counts[k]` nodes along axis `k`; spacing is
    /// `extent / (count - 1)` exactly.
    pub fn build(dim: usize, extents: &[f64], counts: &[usize]) -> Result<Arc<Grid>> {
        if dim != 1 && dim != 2 {
            return Err(CoreError::InvalidInput("dimension must be 1 or 2".to_string()));
        }
        if extents.len() != dim || counts.len() != dim {
            return Err(CoreError::InvalidInput(
                "extents/counts length must equal dimension".to_string(),
            ));
        }
        let mut ext = [0.0; 2];
        let mut cnt = [1usize; 2];
        let mut sp = [0.0; 2];
        for k in 0..dim {
            if counts[k] < 3 {
                return Err(CoreError::InvalidInput("need at least 3 nodes per axis".to_string()));
            }
            if !(extents[k] > 0.0) || !extents[k].is_finite() {
                return Err(CoreError::InvalidInput("extents must be positive".to_string()));
            }
            ext[k] = extents[k];
            cnt[k] = counts[k];
            sp[k] = extents[k] / (counts[k] - 1) as f64;
        }
        let n = cnt[0] * cnt[1];
        let flat_axis = dim - 1;
        let mut class = Vec::with_capacity(n);
        for idx in 0..n {
            let (i, j) = (idx % cnt[0], idx / cnt[0]);
            let ij = [i, j];
            let on_flat = ij[flat_axis] == 0;
            let mut on_boundary = false;
            for k in 0..dim {
                if ij[k] == 0 || ij[k] == cnt[k] - 1 {
                    on_boundary = true;
                }
            }
            class.push(if on_flat {
                NodeClass::FlatPortion
            } else if on_boundary {
                NodeClass::Dirichlet
            } else {
                NodeClass::Interior
            });
        }
        Ok(Arc::new(Grid { dim, extents: ext, counts: cnt, spacing: sp, class }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn counts(&self) -> [usize; 2] {
        self.counts
    }

    pub fn extents(&self) -> [f64; 2] {
        self.extents
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn n_nodes(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.counts[0] && j < self.counts[1]);
        j * self.counts[0] + i
    }

    #[inline]
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        [idx % self.counts[0], idx / self.counts[0]]
    }

    /// Node coordinates, reproducible from index arithmetic alone.
    #[inline]
    pub fn coord(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.multi_index(idx);
        [i as f64 * self.spacing[0], j as f64 * self.spacing[1]]
    }

    /// Distance to the flat portion: the last coordinate of the node.
    #[inline]
    pub fn flat_distance(&self, idx: usize) -> f64 {
        self.coord(idx)[self.dim - 1]
    }

    #[inline]
    pub fn class(&self, idx: usize) -> NodeClass {
        self.class[idx]
    }

    #[inline]
    pub fn is_interior(&self, idx: usize) -> bool {
        self.class[idx] == NodeClass::Interior
    }

    /// All boundary nodes carry Dirichlet data in solves, including the flat
    /// portion.
    #[inline]
    pub fn is_boundary(&self, idx: usize) -> bool {
        self.class[idx] != NodeClass::Interior
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_nodes()).filter(|&i| self.is_interior(i))
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_nodes()).filter(|&i| self.is_boundary(i))
    }

    pub fn flat_portion_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_nodes()).filter(|&i| self.class[i] == NodeClass::FlatPortion)
    }

    /// Node nearest the domain centroid (continuation's observation default).
    pub fn centroid_node(&self) -> usize {
        let i = (self.counts[0] - 1) / 2;
        let j = (self.counts[1] - 1) / 2;
        self.index(i, j)
    }

    /// The whole grid as a region.
    pub fn full_region(&self) -> Region {
        Region { lo: [0, 0], hi: [self.counts[0] - 1, self.counts[1] - 1] }
    }

    fn check_region(&self, r: &Region) -> Result<()> {
        for k in 0..2 {
            if r.lo[k] > r.hi[k] || r.hi[k] >= self.counts[k] {
                return Err(CoreError::InvalidInput("region exceeds grid or is empty".to_string()));
            }
        }
        Ok(())
    }
}

/// Axis-aligned sub-box of a grid, inclusive index ranges per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub lo: [usize; 2],
    pub hi: [usize; 2],
}

impl Region {
    pub fn new(lo: [usize; 2], hi: [usize; 2]) -> Self {
        Region { lo, hi }
    }

    /// Region from real coordinate bounds, snapped to the nearest grid nodes.
    pub fn from_coords(grid: &Grid, lo: &[f64], hi: &[f64]) -> Result<Region> {
        let mut rlo = [0usize; 2];
        let mut rhi = [0usize; 2];
        for k in 0..grid.dim() {
            let h = grid.spacing()[k];
            let max = (grid.counts()[k] - 1) as f64;
            let a = math::round(lo[k] / h).clamp(0.0, max) as usize;
            let b = math::round(hi[k] / h).clamp(0.0, max) as usize;
            if a > b {
                return Err(CoreError::InvalidInput("region bounds out of order".to_string()));
            }
            rlo[k] = a;
            rhi[k] = b;
        }
        let r = Region { lo: rlo, hi: rhi };
        grid.check_region(&r)?;
        Ok(r)
    }

    /// Index-wise containment check (`self` inside `other`).
    pub fn contained_in(&self, other: &Region) -> bool {
        (0..2).all(|k| other.lo[k] <= self.lo[k] && self.hi[k] <= other.hi[k])
    }

    pub fn contains_node(&self, grid: &Grid, idx: usize) -> bool {
        let [i, j] = grid.multi_index(idx);
        i >= self.lo[0] && i <= self.hi[0] && j >= self.lo[1] && j <= self.hi[1]
    }

    pub fn nodes<'g>(&self, grid: &'g Grid) -> impl Iterator<Item = usize> + 'g {
        let r = *self;
        let nx = grid.counts()[0];
        (r.lo[1]..=r.hi[1]).flat_map(move |j| (r.lo[0]..=r.hi[0]).map(move |i| j * nx + i))
    }

    /// Measure of the covered box (product of index extents times spacings).
    pub fn measure(&self, grid: &Grid) -> f64 {
        let mut m = 1.0;
        for k in 0..grid.dim() {
            m *= (self.hi[k] - self.lo[k]) as f64 * grid.spacing()[k];
        }
        m
    }

    /// Trapezoid quadrature weight of a node inside the region.
    fn weight(&self, grid: &Grid, idx: usize) -> f64 {
        let mi = grid.multi_index(idx);
        let mut w = 1.0;
        for k in 0..grid.dim() {
            let edge = mi[k] == self.lo[k] || mi[k] == self.hi[k];
            // A degenerate axis (lo == hi) contributes zero measure.
            let axis = if self.lo[k] == self.hi[k] {
                0.0
            } else if edge {
                0.5 * grid.spacing()[k]
            } else {
                grid.spacing()[k]
            };
            w *= axis;
        }
        w
    }

    /// Sum of trapezoid weights; equals `measure` up to rounding.
    pub fn weight_sum(&self, grid: &Grid) -> f64 {
        self.nodes(grid).map(|idx| self.weight(grid, idx)).sum()
    }
}

/// Scalar field sampled at the nodes of one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        GridFunction { grid: grid.clone(), values: vec![0.0; grid.n_nodes()] }
    }

    pub fn constant(grid: &Arc<Grid>, value: f64) -> Self {
        GridFunction { grid: grid.clone(), values: vec![value; grid.n_nodes()] }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.n_nodes())
            .map(|idx| {
                let c = grid.coord(idx);
                f(&c[..grid.dim()])
            })
            .collect();
        GridFunction { grid: grid.clone(), values }
    }

    /// Wraps raw node values; rejects wrong length or non-finite entries.
    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(CoreError::GridMismatch);
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite { node });
        }
        Ok(GridFunction { grid: grid.clone(), values })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(math::abs(*v)))
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max(math::abs(a - b)))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
    }

    /// Pointwise map into a new field.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// `self + t * other`.
    pub fn axpy(&self, t: f64, other: &GridFunction) -> GridFunction {
        debug_assert!(self.same_grid(other));
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + t * b).collect(),
        }
    }

    /// Checks every value is finite; names the first offending node.
    pub fn check_finite(&self) -> Result<()> {
        if let Some(node) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite { node });
        }
        Ok(())
    }

    pub fn inf_over(&self, region: &Region) -> f64 {
        region.nodes(&self.grid).fold(f64::INFINITY, |m, idx| m.min(self.values[idx]))
    }

    pub fn sup_over(&self, region: &Region) -> f64 {
        region.nodes(&self.grid).fold(f64::NEG_INFINITY, |m, idx| m.max(self.values[idx]))
    }
}

/// Discrete `(sum_R w |f|^p)^(1/p)` with tensor-product trapezoid weights
/// summing to the region's measure.
pub fn lp_mean(f: &GridFunction, p: f64, region: &Region) -> Result<f64> {
    if !(p > 0.0) {
        return Err(CoreError::InvalidInput("lp_mean requires p > 0".to_string()));
    }
    let grid = f.grid();
    grid.check_region(region)?;
    let mut acc = 0.0;
    for idx in region.nodes(grid) {
        let w = region.weight(grid, idx);
        if w > 0.0 {
            acc += w * math::powf(math::abs(f.value(idx)), p);
        }
    }
    Ok(math::powf(acc, 1.0 / p))
}

/// Boundary-normalized quotient `f / x_n`, with a one-sided first-order
/// difference in place of the quotient on the flat portion itself.
///
/// Requires `f = 0` on the flat portion (tolerance `1e-12 * sup|f|`).
pub fn boundary_quotient(f: &GridFunction) -> Result<GridFunction> {
    let grid = f.grid().clone();
    let tol = 1e-12 * f.sup_norm();
    for idx in grid.flat_portion_nodes() {
        if math::abs(f.value(idx)) > tol {
            return Err(CoreError::PreconditionFailed {
                what: "boundary quotient requires f = 0 on the flat portion".to_string(),
                node: idx,
                value: f.value(idx),
            });
        }
    }
    let flat_axis = grid.dim() - 1;
    let h = grid.spacing()[flat_axis];
    let stride = if flat_axis == 0 { 1 } else { grid.counts()[0] };
    let mut q = Vec::with_capacity(grid.n_nodes());
    for idx in 0..grid.n_nodes() {
        let xn = grid.flat_distance(idx);
        if xn > 0.0 {
            q.push(f.value(idx) / xn);
        } else {
            q.push((f.value(idx + stride) - f.value(idx)) / h);
        }
    }
    GridFunction::from_values(&grid, q)
}
