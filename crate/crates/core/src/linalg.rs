//! Banded LU with partial pivoting and low-rank corrections.
//!
//! The finite-difference operators are banded; the projected operator and
//! the bordered Newton systems add a few dense rank-one terms on top. Those
//! are handled by Woodbury's identity around a banded factorization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Square band matrix with `kl` sub- and `ku` super-diagonals.
///
/// Row `i` stores columns `i−kl ..= i+kl+ku`; the extra `kl` columns hold
/// fill-in created by row interchanges during factorization.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku, "({i}, {j}) outside band");
        i * self.width + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "({i}, {j}) outside band");
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "({i}, {j}) outside band");
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.slot(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// Max-abs row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.slot(i, j)].abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// LU factorization with partial pivoting.
    pub fn factor(&self) -> Result<BandLu> {
        let mut a = self.clone();
        let n = a.n;
        let kl = a.kl;
        let reach = a.kl + a.ku;
        let scale = self.norm_inf().max(f64::MIN_POSITIVE);
        let mut piv = vec![0usize; n];
        let mut min_pivot = f64::INFINITY;
        for j in 0..n {
            let last = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = a.data[a.slot(j, j)].abs();
            for r in j + 1..=last {
                let v = a.data[a.slot(r, j)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            piv[j] = p;
            min_pivot = min_pivot.min(best);
            if best <= 1e-300 || best <= f64::EPSILON * 1e-3 * scale {
                return Err(Error::Singular(format!("zero pivot in column {j}")));
            }
            let cmax = (j + reach).min(n - 1);
            if p != j {
                for c in j..=cmax {
                    let (s1, s2) = (a.slot(j, c), a.slot(p, c));
                    a.data.swap(s1, s2);
                }
            }
            let d = a.data[a.slot(j, j)];
            for r in j + 1..=last {
                let sr = a.slot(r, j);
                let l = a.data[sr] / d;
                a.data[sr] = l;
                if l != 0.0 {
                    for c in j + 1..=cmax {
                        let u = a.data[a.slot(j, c)];
                        let s = a.slot(r, c);
                        a.data[s] -= l * u;
                    }
                }
            }
        }
        Ok(BandLu { a, piv, min_pivot, scale })
    }
}

#[derive(Clone, Debug)]
pub struct BandLu {
    a: BandMatrix,
    piv: Vec<usize>,
    min_pivot: f64,
    scale: f64,
}

impl BandLu {
    /// Smallest pivot magnitude relative to `‖A‖_∞`; a cheap conditioning hint.
    pub fn pivot_ratio(&self) -> f64 {
        self.min_pivot / self.scale
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let a = &self.a;
        let n = a.n;
        let reach = a.kl + a.ku;
        let mut x = b.to_vec();
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                x.swap(j, p);
            }
            let xj = x[j];
            if xj != 0.0 {
                for r in j + 1..=(j + a.kl).min(n - 1) {
                    x[r] -= a.data[a.slot(r, j)] * xj;
                }
            }
        }
        for j in (0..n).rev() {
            let mut s = x[j];
            for c in j + 1..=(j + reach).min(n - 1) {
                s -= a.data[a.slot(j, c)] * x[c];
            }
            x[j] = s / a.data[a.slot(j, j)];
        }
        x
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solver for `(B + Σ_i u_i c_iᵀ) x = r` with `B` banded.
#[derive(Clone, Debug)]
pub struct LowRankSolver {
    base: BandMatrix,
    lu: BandLu,
    us: Vec<Vec<f64>>,
    cs: Vec<Vec<f64>>,
    binv_us: Vec<Vec<f64>>,
    cap: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl LowRankSolver {
    pub fn new(base: BandMatrix, updates: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        let lu = base.factor()?;
        let (us, cs): (Vec<_>, Vec<_>) = updates.into_iter().unzip();
        let binv_us: Vec<Vec<f64>> = us.iter().map(|u| lu.solve(u)).collect();
        let m = us.len();
        let cap = DMatrix::from_fn(m, m, |i, j| f64::from(i == j) + dot(&cs[i], &binv_us[j]));
        let cap_norm = cap.iter().fold(1.0f64, |a, x| a.max(x.abs()));
        let cap = cap.lu();
        if m > 0 {
            let det = cap.determinant().abs();
            if !(det > 1e-13 * cap_norm.powi(m as i32)) {
                return Err(Error::Singular(format!("capacitance determinant {det:e}")));
            }
        }
        Ok(Self { base, lu, us, cs, binv_us, cap })
    }

    /// `(B + Σ u_i c_iᵀ) x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.base.matvec(x);
        for (u, c) in self.us.iter().zip(&self.cs) {
            let t = dot(c, x);
            for (yi, ui) in y.iter_mut().zip(u) {
                *yi += t * ui;
            }
        }
        y
    }

    fn solve_once(&self, r: &[f64]) -> Vec<f64> {
        let mut y = self.lu.solve(r);
        if self.us.is_empty() {
            return y;
        }
        let t = DVector::from_iterator(self.cs.len(), self.cs.iter().map(|c| dot(c, &y)));
        let z = self.cap.solve(&t).expect("capacitance checked at construction");
        for (zi, bu) in z.iter().zip(&self.binv_us) {
            for (yj, bj) in y.iter_mut().zip(bu) {
                *yj -= zi * bj;
            }
        }
        y
    }

    /// `‖B‖_∞ + Σ ‖u_i‖_∞‖c_i‖_1`, an upper bound on the operator's `∞`-norm.
    pub fn norm_estimate(&self) -> f64 {
        self.base.norm_inf()
            + self
                .us
                .iter()
                .zip(&self.cs)
                .map(|(u, c)| norm_inf(u) * c.iter().map(|x| x.abs()).sum::<f64>())
                .sum::<f64>()
    }

    /// Solve with up to `refine` steps of iterative refinement; stops once
    /// the residual is below `rtol·‖r‖`. Returns the solution and the
    /// 2-norm of its residual.
    pub fn solve(&self, r: &[f64], refine: usize, rtol: f64) -> (Vec<f64>, f64) {
        let rn = norm2(r);
        let mut x = self.solve_once(r);
        let mut res = residual(&self.apply(&x), r);
        let mut rel = if rn > 0.0 { norm2(&res) / rn } else { norm2(&res) };
        for _ in 0..refine {
            if rel <= rtol {
                break;
            }
            let dx = self.solve_once(&res);
            let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let cres = residual(&self.apply(&cand), r);
            let crel = if rn > 0.0 { norm2(&cres) / rn } else { norm2(&cres) };
            if crel >= rel {
                break;
            }
            x = cand;
            res = cres;
            rel = crel;
        }
        (x, rel * if rn > 0.0 { rn } else { 1.0 })
    }
}

fn residual(ax: &[f64], r: &[f64]) -> Vec<f64> {
    r.iter().zip(ax).map(|(a, b)| a - b).collect()
}
