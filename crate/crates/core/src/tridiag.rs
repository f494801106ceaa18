//! Symmetric tridiagonal eigenpairs by Sturm-sequence bisection and
//! inverse iteration.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, BandMatrix};

/// Symmetric tridiagonal matrix: `diag[i]` and `off[i]` coupling `i, i+1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len().max(1));
        Self { diag, off }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.off[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.n() {
            let e2 = if i == 0 { 0.0 } else { self.off[i - 1] * self.off[i - 1] };
            q = self.diag[i] - x - if i == 0 { 0.0 } else { e2 / q };
            if q == 0.0 {
                q = -f64::EPSILON * (self.diag[i].abs() + x.abs() + f64::MIN_POSITIVE);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn bounds(&self) -> (f64, f64) {
        let n = self.n();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `index`-th smallest eigenvalue (0-based), bisected to roundoff.
    pub fn eigenvalue(&self, index: usize) -> f64 {
        let (mut lo, mut hi) = self.bounds();
        let span = hi - lo;
        lo -= 1e-12 * span.abs() + f64::MIN_POSITIVE;
        hi += 1e-12 * span.abs() + f64::MIN_POSITIVE;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if self.count_below(mid) > index {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// The `m` eigenvalues of smallest magnitude, sorted by magnitude.
    pub fn eigenvalues_near_zero(&self, m: usize) -> Vec<f64> {
        let n = self.n();
        let m = m.min(n);
        let c0 = self.count_below(0.0);
        let lo = c0.saturating_sub(m);
        let hi = (c0 + m).min(n);
        let mut vals: Vec<f64> = (lo..hi).map(|i| self.eigenvalue(i)).collect();
        vals.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
        vals.truncate(m);
        vals
    }

    /// Unit eigenvector for the eigenvalue `lambda` by inverse iteration,
    /// orthogonalized against `previous`.
    pub fn eigenvector(&self, lambda: f64, previous: &[Vec<f64>]) -> Result<Vec<f64>> {
        let n = self.n();
        let (lo, hi) = self.bounds();
        let scale = (hi - lo).abs().max(lambda.abs()).max(f64::MIN_POSITIVE);
        // a tiny shift keeps the factorization nonsingular
        let mut shift = lambda + 8.0 * f64::EPSILON * scale;
        let mut band = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            band.set(i, i, self.diag[i] - shift);
            if i + 1 < n {
                band.set(i, i + 1, self.off[i]);
                band.set(i + 1, i, self.off[i]);
            }
        }
        let lu = match band.factor() {
            Ok(lu) => lu,
            Err(_) => {
                shift += 64.0 * f64::EPSILON * scale;
                for i in 0..n {
                    band.set(i, i, self.diag[i] - shift);
                }
                band.factor()?
            }
        };
        // deterministic start with components in every direction
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7548776662466927).fract()).collect();
        normalize(&mut x);
        let tol = 1e-10 * scale;
        let mut res = f64::INFINITY;
        // a few sweeps even when the residual is already small: clustered
        // eigenvalues closer than `tol` need them to separate
        for it in 0..12 {
            let mut y = lu.solve(&x);
            for p in previous {
                let c = dot(&y, p);
                for (yi, pi) in y.iter_mut().zip(p) {
                    *yi -= c * pi;
                }
            }
            let ny = norm2(&y);
            if !(ny.is_finite() && ny > 0.0) {
                break;
            }
            for v in &mut y {
                *v /= ny;
            }
            x = y;
            let tx = self.matvec(&x);
            res = tx.iter().zip(&x).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
            if it >= 2 && res <= tol {
                return Ok(x);
            }
        }
        Err(Error::EigenConvergence(format!(
            "inverse iteration at {lambda:e}: residual {res:e} above {tol:e}"
        )))
    }
}

fn normalize(x: &mut [f64]) {
    let n = norm2(x);
    for v in x {
        *v /= n;
    }
}
