//! Closed-form decaying solutions of `−φ'' + k²(1 − λV₀ − W)φ = 0` on
//! `(0, ∞)` normalized by `φ(0) = 1`.
//!
//! For P1 the mode is a single exponential. For P2 it is an inner piece on
//! `[0, b]` (hyperbolic, linear or trigonometric depending on `β`) glued
//! `C¹` to the decaying exponential `φ(b)e^{−κ_out(y−b)}`. The hyperbolic
//! piece is stored in a scaled-exponential form that cannot overflow.

use serde::Serialize;

use crate::domain::{Case, PotentialSpec, StepRegime};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Inner {
    /// `β < 1`: `φ(y) = (P e^{−κy} + Q e^{κ(y−2b)})/D`, `κ = k√(1−β)`.
    /// Equivalent to `cosh κy + c1 sinh κy`.
    Hyperbolic { kappa: f64, p: f64, q: f64, d: f64, c1: f64 },
    /// `β = 1`: `φ(y) = 1 + c1·y`.
    Linear { c1: f64 },
    /// `β > 1`: `φ(y) = cos ωy + c1 sin ωy`, `ω = k√(β−1)`.
    Oscillatory { omega: f64, c1: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModeFunction {
    pub k: usize,
    pub lambda: f64,
    /// Decay rate outside the step, `k√(1−λ)`.
    pub kappa_out: f64,
    /// `(b, inner piece, φ(b))` for P2; `None` for P1.
    pub step: Option<(f64, Inner, f64)>,
}

fn regime_check(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::Regime(format!("lambda = {lambda} must be < 1")))
    }
}

/// Mode function `φ_k(·; λ)` for `spec`.
pub fn build_mode(spec: &PotentialSpec, k: usize, lambda: f64) -> Result<ModeFunction> {
    regime_check(lambda)?;
    if k == 0 {
        return Err(Error::Regime("wavenumber must be at least 1".into()));
    }
    let kf = k as f64;
    let l = (1.0 - lambda).sqrt();
    let kappa_out = kf * l;
    let step = match spec.case {
        Case::P1 => None,
        Case::P2 => {
            let (beta, b) = spec.step().expect("P2 carries a step");
            if !(beta.is_finite() && b.is_finite() && b > 0.0) {
                return Err(Error::Regime("P2 requires finite beta and positive b".into()));
            }
            let (inner, phi_b) = match StepRegime::of(beta) {
                StepRegime::Below => {
                    let s = (1.0 - beta).sqrt();
                    let kappa = kf * s;
                    let r = l / s;
                    let p = 0.5 * (1.0 + r);
                    let q = 0.5 * (1.0 - r);
                    let e2 = (-2.0 * kappa * b).exp();
                    let d = p + q * e2;
                    let c1 = (q * e2 - p) / d;
                    let phi_b = (-kappa * b).exp() / d;
                    (Inner::Hyperbolic { kappa, p, q, d, c1 }, phi_b)
                }
                StepRegime::Unit => {
                    let c1 = -kappa_out / (1.0 + kappa_out * b);
                    (Inner::Linear { c1 }, 1.0 / (1.0 + kappa_out * b))
                }
                StepRegime::Above => {
                    let omega = kf * (beta - 1.0).sqrt();
                    let (sn, cs) = (omega * b).sin_cos();
                    let den = omega * cs + kappa_out * sn;
                    if den.abs() <= 1e-14 * (omega + kappa_out) {
                        return Err(Error::Regime(format!(
                            "no decaying mode normalized at y = 0 for k = {k}, lambda = {lambda}"
                        )));
                    }
                    let c1 = (omega * sn - kappa_out * cs) / den;
                    (Inner::Oscillatory { omega, c1 }, cs + c1 * sn)
                }
            };
            Some((b, inner, phi_b))
        }
    };
    Ok(ModeFunction { k, lambda, kappa_out, step })
}

impl ModeFunction {
    /// `φ(|y|)`.
    pub fn value(&self, y: f64) -> f64 {
        let y = y.abs();
        match self.step {
            None => (-self.kappa_out * y).exp(),
            Some((b, inner, phi_b)) => {
                if y >= b {
                    phi_b * (-self.kappa_out * (y - b)).exp()
                } else {
                    inner_value(inner, b, y)
                }
            }
        }
    }

    /// `φ'(y)` for `y ≥ 0`; at `y = 0` this is `φ'(0₊)`.
    pub fn derivative(&self, y: f64) -> f64 {
        debug_assert!(y >= 0.0);
        match self.step {
            None => -self.kappa_out * (-self.kappa_out * y).exp(),
            Some((b, inner, phi_b)) => {
                if y >= b {
                    -self.kappa_out * phi_b * (-self.kappa_out * (y - b)).exp()
                } else {
                    match inner {
                        Inner::Hyperbolic { kappa, p, q, d, .. } => {
                            kappa * (-p * (-kappa * y).exp() + q * (kappa * (y - 2.0 * b)).exp()) / d
                        }
                        Inner::Linear { c1 } => c1,
                        Inner::Oscillatory { omega, c1 } => {
                            let (sn, cs) = (omega * y).sin_cos();
                            omega * (c1 * cs - sn)
                        }
                    }
                }
            }
        }
    }

    /// `φ'_k(0₊; λ)`.
    pub fn phi_prime0(&self) -> f64 {
        match self.step {
            None => -self.kappa_out,
            Some((_, Inner::Hyperbolic { kappa, c1, .. }, _)) => kappa * c1,
            Some((_, Inner::Linear { c1 }, _)) => c1,
            Some((_, Inner::Oscillatory { omega, c1 }, _)) => omega * c1,
        }
    }

    /// Outer coefficient `c2` with `φ(y) = c2·e^{−κ_out y}` for `y ≥ b`.
    /// May overflow to infinity for large `κ_out·b`; [`ModeFunction::value`]
    /// does not use it.
    pub fn c2(&self) -> f64 {
        match self.step {
            None => 1.0,
            Some((b, _, phi_b)) => phi_b * (self.kappa_out * b).exp(),
        }
    }

    /// `∫_b^∞ φ²` (P2) or `∫_0^∞ φ²` (P1): the `V₀`-weighted square norm.
    pub fn v0_l2_sq(&self) -> f64 {
        match self.step {
            None => 0.5 / self.kappa_out,
            Some((_, _, phi_b)) => phi_b * phi_b / (2.0 * self.kappa_out),
        }
    }

    /// `‖φ‖²_{L²(0,∞)}`.
    pub fn l2_sq(&self) -> f64 {
        let outer = self.v0_l2_sq();
        match self.step {
            None => outer,
            Some((b, inner, _)) => outer + inner_l2_sq(inner, b),
        }
    }

    /// `ψ'_k(0; λ) = k²∫_0^∞ V₀φ²`, the `λ`-derivative of `φ'_k(0₊; λ)`.
    pub fn psi_prime0(&self) -> f64 {
        let k = self.k as f64;
        k * k * self.v0_l2_sq()
    }
}

fn inner_value(inner: Inner, b: f64, y: f64) -> f64 {
    match inner {
        Inner::Hyperbolic { kappa, p, q, d, .. } => (p * (-kappa * y).exp() + q * (kappa * (y - 2.0 * b)).exp()) / d,
        Inner::Linear { c1 } => 1.0 + c1 * y,
        Inner::Oscillatory { omega, c1 } => {
            let (sn, cs) = (omega * y).sin_cos();
            cs + c1 * sn
        }
    }
}

fn inner_l2_sq(inner: Inner, b: f64) -> f64 {
    match inner {
        Inner::Hyperbolic { kappa, p, q, d, .. } => {
            let e2 = (-2.0 * kappa * b).exp();
            let e4 = e2 * e2;
            // 1 − e^{−2κb} without cancellation
            let one_minus_e2 = -(-2.0 * kappa * b).exp_m1();
            (p * p * one_minus_e2 / (2.0 * kappa) + 2.0 * p * q * b * e2 + q * q * (e2 - e4) / (2.0 * kappa))
                / (d * d)
        }
        Inner::Linear { c1 } => b + c1 * b * b + c1 * c1 * b * b * b / 3.0,
        Inner::Oscillatory { omega, c1 } => {
            let s2 = (2.0 * omega * b).sin() / (4.0 * omega);
            let cos_part = 0.5 * b + s2;
            let sin_part = 0.5 * b - s2;
            let cross = c1 * (1.0 - (2.0 * omega * b).cos()) / (2.0 * omega);
            cos_part + c1 * c1 * sin_part + cross
        }
    }
}

/// `φ'_k(0₊; λ)`.
pub fn phi_prime0(spec: &PotentialSpec, k: usize, lambda: f64) -> Result<f64> {
    Ok(build_mode(spec, k, lambda)?.phi_prime0())
}

/// `‖φ_k‖_{L²(0,∞)}`.
pub fn phi_l2(spec: &PotentialSpec, k: usize, lambda: f64) -> Result<f64> {
    Ok(build_mode(spec, k, lambda)?.l2_sq().sqrt())
}

/// `ψ'_k(0; λ) = k²∫_0^∞ V₀φ_k²`.
pub fn psi_prime0(spec: &PotentialSpec, k: usize, lambda: f64) -> Result<f64> {
    Ok(build_mode(spec, k, lambda)?.psi_prime0())
}
