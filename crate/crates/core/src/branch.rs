//! Nonlinear solvers and branch continuation.
//!
//! Both settings are solved as amplitude-constrained extended systems in
//! `(state, λ)` by damped Newton: the distributional system in Fourier
//! coefficients ([`distributional`]) and the regular mode-coupled system on
//! the finite-difference grid ([`regular`]). [`curvature`] evaluates the
//! closed-form curvature candidates and adjudicates between them by fitting
//! the traced branch.

pub mod curvature;
pub mod distributional;
pub mod regular;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{norm2, norm_inf};
use crate::seqalg::OddSpectrum;

/// Solution representation on a branch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum BranchState {
    /// Fourier coefficients `a_1..a_K` of the distributional ansatz.
    Spectrum(OddSpectrum),
    /// Regular setting: `values[k−1][j] = u_k(y_j)` on the interior grid nodes.
    ModeGrid { values: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BranchPoint {
    pub eps: f64,
    pub lambda: f64,
    pub state: BranchState,
    /// Max-norm of the extended residual at acceptance.
    pub residual_norm: f64,
    pub newton_iters: usize,
    /// Max-norm residual before each Newton step and after the last.
    pub history: Vec<f64>,
    /// Size of the cubic term discarded by truncating to `K` modes.
    pub truncation_residual: f64,
}

impl BranchPoint {
    pub fn spectrum(&self) -> Option<&OddSpectrum> {
        match &self.state {
            BranchState::Spectrum(a) => Some(a),
            BranchState::ModeGrid { .. } => None,
        }
    }

    pub fn mode_grid(&self) -> Option<&[Vec<f64>]> {
        match &self.state {
            BranchState::ModeGrid { values } => Some(values),
            BranchState::Spectrum(_) => None,
        }
    }

    /// `max_n r_{n+1}/r_n²` over the Newton history: bounded for quadratic
    /// convergence. Steps that reach the roundoff floor are skipped.
    pub fn quadratic_constant(&self, floor: f64) -> Option<f64> {
        self.history
            .windows(2)
            .filter(|w| w[0] > floor && w[1] > floor)
            .map(|w| w[1] / (w[0] * w[0]))
            .fold(None, |m: Option<f64>, c| Some(m.map_or(c, |m| m.max(c))))
    }
}

/// A traced branch: points sorted by `ε`, plus the half-branches that stopped early.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    /// `(ε, message)` for each corrector failure that ended a half-branch.
    pub failures: Vec<(f64, String)>,
}

impl Branch {
    pub fn positive(&self) -> impl DoubleEndedIterator<Item = &BranchPoint> {
        self.points.iter().filter(|p| p.eps > 0.0)
    }

    pub fn negative(&self) -> impl DoubleEndedIterator<Item = &BranchPoint> {
        self.points.iter().filter(|p| p.eps < 0.0)
    }
}

/// `ε_j = j·eps_max/n`, `j = 1..n`, and their negatives.
pub fn eps_schedule(eps_max: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|j| j as f64 * eps_max / n as f64).collect()
}

/// Outcome of [`damped_newton`].
pub(crate) struct NewtonResult {
    pub x: Vec<f64>,
    pub lambda: f64,
    pub residual: f64,
    pub iters: usize,
    pub history: Vec<f64>,
}

/// Armijo-damped Newton on the extended unknown `(x, λ)`.
///
/// `eval` returns the full residual (constraint last); `step` returns the
/// Newton correction `(δx, δλ)` for the residual it is given. Convergence
/// is declared when the max-norm residual is at most `tol`.
pub(crate) fn damped_newton(
    x0: Vec<f64>,
    lambda0: f64,
    tol: f64,
    max_iters: usize,
    eval: impl Fn(&[f64], f64) -> Result<Vec<f64>>,
    step: impl Fn(&[f64], f64, &[f64]) -> Result<(Vec<f64>, f64)>,
) -> Result<NewtonResult> {
    let mut x = x0;
    let mut lambda = lambda0;
    let mut f = eval(&x, lambda)?;
    let mut history = vec![norm_inf(&f)];
    let mut iters = 0;
    loop {
        let r = *history.last().expect("nonempty");
        if r <= tol {
            return Ok(NewtonResult { x, lambda, residual: r, iters, history });
        }
        if iters >= max_iters || !r.is_finite() {
            return Err(Error::NewtonDiverged { iterations: iters, last_residual: r, history, last_iterate: x });
        }
        let (dx, dl) = step(&x, lambda, &f)?;
        let merit = norm2(&f);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=20 {
            let xt: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + t * d).collect();
            let lt = lambda + t * dl;
            if lt < 1.0 {
                if let Ok(ft) = eval(&xt, lt) {
                    if norm2(&ft) <= (1.0 - 1e-4 * t) * merit {
                        accepted = Some((xt, lt, ft));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        iters += 1;
        match accepted {
            Some((xt, lt, ft)) => {
                x = xt;
                lambda = lt;
                f = ft;
                history.push(norm_inf(&f));
            }
            None => {
                return Err(Error::NewtonDiverged { iterations: iters, last_residual: r, history, last_iterate: x });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_solves_scalar_system() {
        // x² − λ = 0 with constraint x = 0.5
        let res = damped_newton(
            vec![1.0],
            0.5,
            1e-14,
            20,
            |x, l| Ok(vec![x[0] * x[0] - l, x[0] - 0.5]),
            |x, _l, f| {
                // [[2x, −1], [1, 0]] (dx, dl) = −f
                let dx = -f[1];
                let dl = 2.0 * x[0] * dx + f[0];
                Ok((vec![dx], dl))
            },
        )
        .unwrap();
        assert_eq!(res.x[0], 0.5);
        assert!((res.lambda - 0.25).abs() < 1e-14);
        assert!(res.iters <= 3);
    }

    #[test]
    fn newton_reports_divergence() {
        let err = damped_newton(vec![1.0], 0.0, 1e-14, 5, |x, _| Ok(vec![x[0] * x[0] + 1.0]), |x, _, f| {
            Ok((vec![-f[0] / (2.0 * x[0])], 0.0))
        })
        .err()
        .unwrap();
        assert!(matches!(err, Error::NewtonDiverged { .. }));
    }

    #[test]
    fn schedule_spacing() {
        let s = eps_schedule(0.1, 4);
        assert_eq!(s, vec![0.025, 0.05, 0.07500000000000001, 0.1]);
    }
}
