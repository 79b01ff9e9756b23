//! Shooting method for two-point boundary value problems
//! `v'' = -g(x, v)` on `(0, 1)` with `v(0) = v(1) = 0`.
//!
//! Fixed-step RK4 in the slope parameter `sigma = v'(0)`, sign-change scan
//! plus bisection in `sigma`, and a bisection in an outer parameter for
//! locating the largest parameter value that still admits a solution.

#[derive(Debug, Clone, Copy)]
pub struct Trajectory {
    /// v(1)
    pub end_value: f64,
    /// sup of v along the trajectory
    pub sup: f64,
}

/// Integrates `v'' = -g(x, v)`, `v(0) = 0`, `v'(0) = sigma`.
pub fn shoot(g: &impl Fn(f64, f64) -> f64, sigma: f64, steps: usize) -> Trajectory {
    let h = 1.0 / steps as f64;
    let mut x = 0.0;
    let mut v = 0.0f64;
    let mut w = sigma;
    let mut sup = 0.0f64;
    let f = |x: f64, v: f64, w: f64| -> (f64, f64) { (w, -g(x, v)) };
    for _ in 0..steps {
        let (k1v, k1w) = f(x, v, w);
        let (k2v, k2w) = f(x + 0.5 * h, v + 0.5 * h * k1v, w + 0.5 * h * k1w);
        let (k3v, k3w) = f(x + 0.5 * h, v + 0.5 * h * k2v, w + 0.5 * h * k2w);
        let (k4v, k4w) = f(x + h, v + h * k3v, w + h * k3w);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        w += h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        x += h;
        sup = sup.max(v);
        if !v.is_finite() {
            return Trajectory { end_value: f64::NEG_INFINITY, sup };
        }
    }
    Trajectory { end_value: v, sup }
}

/// All roots of `sigma -> v(1; sigma)` bracketed by the scan grid, refined by
/// bisection. Returns `(sigma, sup_v)` pairs.
pub fn find_roots(
    g: &impl Fn(f64, f64) -> f64,
    sigma_grid: &[f64],
    steps: usize,
    rel_tol: f64,
) -> Vec<(f64, f64)> {
    let mut roots = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for &s in sigma_grid {
        let t = shoot(g, s, steps);
        if let Some((s0, e0)) = prev {
            if e0 == 0.0 {
                roots.push((s0, shoot(g, s0, steps).sup));
            } else if e0.signum() != t.end_value.signum() && t.end_value.is_finite() {
                let (mut a, mut b) = (s0, s);
                let mut ea = e0;
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    let em = shoot(g, m, steps).end_value;
                    if em == 0.0 || (b - a) <= rel_tol * m.abs().max(1e-300) {
                        break;
                    }
                    if ea.signum() == em.signum() {
                        a = m;
                        ea = em;
                    } else {
                        b = m;
                    }
                }
                let root = 0.5 * (a + b);
                roots.push((root, shoot(g, root, steps).sup));
            }
        }
        prev = Some((s, t.end_value));
    }
    roots
}

/// Largest `lambda` in `[lo, hi]` for which `v'' = -g_lambda(x, v)` still has
/// a solution (detected through the scan grid), located by bisection.
/// `lo` must admit a solution and `hi` must not.
pub fn largest_solvable_parameter<G: Fn(f64, f64) -> f64>(
    make: impl Fn(f64) -> G,
    lo: f64,
    hi: f64,
    sigma_grid: &[f64],
    steps: usize,
    tol: f64,
) -> f64 {
    let has_root = |lambda: f64| -> bool {
        let g = make(lambda);
        !find_roots(&g, sigma_grid, steps, 1e-9).is_empty()
    };
    assert!(has_root(lo), "lower end must admit a solution");
    assert!(!has_root(hi), "upper end must not admit a solution");
    let (mut a, mut b) = (lo, hi);
    while b - a > tol * b {
        let m = 0.5 * (a + b);
        if has_root(m) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Log-spaced grid from `lo` to `hi` (both positive), `n` points.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n).map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp()).collect()
}
