//! Dense LU with partial pivoting, textbook version, for systems up to a few
//! hundred unknowns.

pub struct DenseLu {
    n: usize,
    lu: Vec<Vec<f64>>,
    perm: Vec<usize>,
}

impl DenseLu {
    pub fn factorize(mut a: Vec<Vec<f64>>) -> Option<DenseLu> {
        let n = a.len();
        let mut perm = Vec::with_capacity(n);
        for k in 0..n {
            let mut p = k;
            let mut pmax = a[k][k].abs();
            for i in (k + 1)..n {
                if a[i][k].abs() > pmax {
                    pmax = a[i][k].abs();
                    p = i;
                }
            }
            if pmax == 0.0 {
                return None;
            }
            perm.push(p);
            a.swap(k, p);
            for i in (k + 1)..n {
                let m = a[i][k] / a[k][k];
                a[i][k] = m;
                for j in (k + 1)..n {
                    a[i][j] -= m * a[k][j];
                }
            }
        }
        Some(DenseLu { n, lu: a, perm })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        // factorization swapped whole rows (L parts included), so all
        // interchanges must be applied before the triangular solves
        for k in 0..self.n {
            x.swap(k, self.perm[k]);
        }
        for k in 0..self.n {
            for i in (k + 1)..self.n {
                let m = self.lu[i][k];
                x[i] -= m * x[k];
            }
        }
        for i in (0..self.n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..self.n {
                acc -= self.lu[i][j] * x[j];
            }
            x[i] = acc / self.lu[i][i];
        }
        x
    }
}
