//! Banded direct solver and inverse power iteration.
//!
//! Storage follows the usual band layout: entry `(i, j)` of an `n x n` matrix
//! with `kl` subdiagonals and `ku` superdiagonals lives at band row
//! `kl + ku + i - j`. The extra `kl` rows on top hold fill-in from partial
//! pivoting.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::math;

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// `(2*kl + ku + 1) x n`, row-major over band rows.
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandMatrix { n, kl, ku, data: vec![0.0; (2 * kl + ku + 1) * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(i + self.ku + self.kl >= j && j + self.kl >= i, "outside band");
        (self.kl + self.ku + i - j) * self.n + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + self.ku >= j && j + self.kl >= i {
            self.data[self.slot(i, j)]
        } else {
            0.0
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    /// Dense `y = A x` using only the declared band (not the fill area).
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let jlo = i.saturating_sub(self.kl);
            let jhi = (i + self.ku).min(self.n - 1);
            let mut acc = 0.0;
            for j in jlo..=jhi {
                acc += self.data[(self.kl + self.ku + i - j) * self.n + j] * x[j];
            }
            y[i] = acc;
        }
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(math::abs(*v)))
    }

    /// LU factorization with partial pivoting. Consumes the matrix.
    pub fn factorize(mut self) -> Result<BandLu> {
        let scale = self.max_abs();
        let breakdown = 1e-14 * if scale > 0.0 { scale } else { 1.0 };
        let n = self.n;
        let kl = self.kl;
        let kueff = self.kl + self.ku;
        let mut pivots = vec![0usize; n];
        let mut smallest = f64::INFINITY;
        for j in 0..n {
            let ilim = (j + kl).min(n - 1);
            // partial pivoting over the column segment j..=ilim
            let mut p = j;
            let mut pmax = math::abs(self.data[(kl + self.ku + j - j) * n + j]);
            for i in (j + 1)..=ilim {
                let v = math::abs(self.data[(kl + self.ku + i - j) * n + j]);
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            pivots[j] = p;
            if pmax < breakdown {
                return Err(CoreError::SingularMatrix { pivot: pmax });
            }
            smallest = smallest.min(pmax);
            let jhi = (j + kueff).min(n - 1);
            if p != j {
                for k in j..=jhi {
                    let sa = (kl + self.ku + j - k) * n + k;
                    let sb = (kl + self.ku + p - k) * n + k;
                    self.data.swap(sa, sb);
                }
            }
            let diag = self.data[(kl + self.ku) * n + j];
            for i in (j + 1)..=ilim {
                let s = (kl + self.ku + i - j) * n + j;
                let m = self.data[s] / diag;
                self.data[s] = m;
                if m != 0.0 {
                    for k in (j + 1)..=jhi {
                        let su = (kl + self.ku + j - k) * n + k;
                        let sl = (kl + self.ku + i - k) * n + k;
                        self.data[sl] -= m * self.data[su];
                    }
                }
            }
        }
        Ok(BandLu { mat: self, pivots, smallest_pivot: smallest })
    }
}

/// Factorized band matrix; solves share the factorization.
#[derive(Debug, Clone)]
pub struct BandLu {
    mat: BandMatrix,
    pivots: Vec<usize>,
    smallest_pivot: f64,
}

impl BandLu {
    pub fn smallest_pivot(&self) -> f64 {
        self.smallest_pivot
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.mat.n;
        let kl = self.mat.kl;
        let ku = self.mat.ku;
        let kueff = kl + ku;
        let mut x = rhs.to_vec();
        // forward elimination with recorded swaps and multipliers
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                x.swap(j, p);
            }
            let ilim = (j + kl).min(n - 1);
            for i in (j + 1)..=ilim {
                let m = self.mat.data[(kl + ku + i - j) * n + j];
                x[i] -= m * x[j];
            }
        }
        // back substitution on U (band rows up to kl+ku above the diagonal)
        for i in (0..n).rev() {
            let jhi = (i + kueff).min(n - 1);
            let mut acc = x[i];
            for j in (i + 1)..=jhi {
                acc -= self.mat.data[(kl + ku + i - j) * n + j] * x[j];
            }
            x[i] = acc / self.mat.data[(kl + ku) * n + i];
        }
        x
    }
}

/// Smallest eigenvalue of the pencil `A x = lambda C x` (`C` a nonnegative
/// diagonal weight) by inverse power iteration on `A^{-1} C`.
pub fn smallest_pencil_eigenvalue(
    a: &BandMatrix,
    c_diag: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    if c_diag.iter().all(|&c| c == 0.0) {
        return Err(CoreError::InvalidInput("weight is identically zero".to_string()));
    }
    let n = a.n();
    let lu = a.clone().factorize()?;
    let mut x = vec![1.0; n];
    let mut lambda_prev = f64::INFINITY;
    for _ in 0..max_iter {
        let cx: Vec<f64> = x.iter().zip(c_diag).map(|(xi, ci)| xi * ci).collect();
        let y = lu.solve(&cx);
        let norm = math::sqrt(y.iter().map(|v| v * v).sum::<f64>());
        if norm == 0.0 {
            return Err(CoreError::InvalidInput("power iteration collapsed".to_string()));
        }
        x = y.iter().map(|v| v / norm).collect();
        // Rayleigh quotient of the pencil at the current iterate
        let ax = a.matvec(&x);
        let num: f64 = x.iter().zip(&ax).map(|(u, v)| u * v).sum();
        let den: f64 = x.iter().zip(c_diag).map(|(u, c)| u * u * c).sum();
        let lambda = num / den;
        if math::abs(lambda - lambda_prev) <= tol * math::abs(lambda) {
            return Ok(lambda);
        }
        lambda_prev = lambda;
    }
    Ok(lambda_prev)
}
