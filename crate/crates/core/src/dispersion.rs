//! Dispersion coefficients `A^k_λ = 2φ'_k(0₊; λ) + k²α`, bifurcation
//! points, and scans that locate all zeros of `A` on a `(k, λ)` window.

use std::ops::RangeInclusive;

use serde::Serialize;

use crate::domain::{BifurcationPoint, Case, PotentialSpec, StepRegime};
use crate::error::{Error, Result};
use crate::modes::build_mode;
use crate::par::Exec;

/// Zero polishing target on `|A|`.
pub const ROOT_TOL: f64 = 1e-12;

/// `A^k_λ = 2φ'_k(0₊; λ) + k²α`.
pub fn a_coeff(spec: &PotentialSpec, k: usize, lambda: f64) -> Result<f64> {
    let m = build_mode(spec, k, lambda)?;
    let kf = k as f64;
    Ok(2.0 * m.phi_prime0() + kf * kf * spec.alpha)
}

/// `∂A^k_λ/∂λ = 2ψ'_k(0; λ)`.
pub fn a_coeff_dlambda(spec: &PotentialSpec, k: usize, lambda: f64) -> Result<f64> {
    Ok(2.0 * build_mode(spec, k, lambda)?.psi_prime0())
}

/// The `α` for which `A^{k*}_{λ*} = 0`.
///
/// Closed forms: P1 and P2 with `β > 1` at `b = π/√(β−1)` give
/// `2√(1−λ*)/k*`; `β = 1` gives `2√(1−λ*)/(k*(1+√(1−λ*)k*b))`; `β < 1` gives
/// `(2√(1−β)/k*)` times the hyperbolic ratio. All are `−2φ'_{k*}(0₊; λ*)/k*²`.
pub fn alpha_star(spec: &PotentialSpec, k_star: usize, lambda_star: f64) -> Result<f64> {
    if let Case::P2 = spec.case {
        let (beta, _) = spec.step().expect("P2 carries a step");
        if !beta.is_finite() {
            return Err(Error::Regime("beta must be finite".into()));
        }
    }
    let m = build_mode(spec, k_star, lambda_star)?;
    let k = k_star as f64;
    Ok(-2.0 * m.phi_prime0() / (k * k))
}

/// Bifurcation point at `(k*, λ*)` with its induced `α`.
pub fn bifurcation_point(spec: &PotentialSpec, k_star: usize, lambda_star: f64) -> Result<BifurcationPoint> {
    Ok(BifurcationPoint { k_star, lambda_star, alpha: alpha_star(spec, k_star, lambda_star)? })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispersionScan {
    pub ks: Vec<usize>,
    pub lambdas: Vec<f64>,
    /// `residuals[i][j] = A^{ks[i]}_{lambdas[j]}`.
    pub residuals: Vec<Vec<f64>>,
    /// Polished zeros `(k, λ)`, sorted by `k` then `λ`.
    pub zeros: Vec<(usize, f64)>,
}

impl DispersionScan {
    /// True when the window contains exactly one zero.
    pub fn certifies_uniqueness(&self) -> bool {
        self.zeros.len() == 1
    }
}

/// Evenly spaced grid with both ends.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Evaluates `A` on the `(k, λ)` grid and polishes every sign change to
/// `|A| ≤ 1e-12` by safeguarded secant/bisection.
pub fn kernel_scan(
    spec: &PotentialSpec,
    ks: RangeInclusive<usize>,
    lambda_interval: (f64, f64),
    n_lambda: usize,
    exec: Exec,
) -> Result<DispersionScan> {
    let (lo, hi) = lambda_interval;
    if !(lo < hi && hi < 1.0) || n_lambda < 2 {
        return Err(Error::Regime(format!("scan window [{lo}, {hi}] must satisfy lo < hi < 1 with at least 2 samples")));
    }
    let ks: Vec<usize> = ks.collect();
    let lambdas = linspace(lo, hi, n_lambda);
    let rows: Vec<Result<(Vec<f64>, Vec<(usize, f64)>)>> = exec.map(&ks, |&k| {
        let row = lambdas.iter().map(|&l| a_coeff(spec, k, l)).collect::<Result<Vec<f64>>>()?;
        let mut zeros = Vec::new();
        let mut j = 0;
        while j < row.len() {
            if row[j] == 0.0 {
                zeros.push((k, lambdas[j]));
                j += 1;
                continue;
            }
            if j + 1 < row.len() && row[j + 1] != 0.0 && row[j].signum() != row[j + 1].signum() {
                zeros.push((k, polish(|l| a_coeff(spec, k, l), lambdas[j], lambdas[j + 1], row[j], row[j + 1])?));
            }
            j += 1;
        }
        Ok((row, zeros))
    });
    let mut residuals = Vec::with_capacity(ks.len());
    let mut zeros = Vec::new();
    for r in rows {
        let (row, z) = r?;
        residuals.push(row);
        zeros.extend(z);
    }
    zeros.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(DispersionScan { ks, lambdas, residuals, zeros })
}

/// Root of `f` in `[a, b]` given a sign change `fa·fb < 0`.
fn polish(f: impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64) -> Result<f64> {
    let mut best = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    for it in 0..200 {
        if best.1.abs() <= ROOT_TOL {
            break;
        }
        // secant step, falling back to bisection when it leaves the bracket
        // or every third iteration to guarantee shrinkage
        let mut x = b - fb * (b - a) / (fb - fa);
        if !(x > a.min(b) && x < a.max(b)) || it % 3 == 2 {
            x = 0.5 * (a + b);
        }
        if x == a || x == b {
            break;
        }
        let fx = f(x)?;
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx == 0.0 {
            break;
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
    }
    Ok(best.0)
}

/// Largest half-width `w ≤ max_halfwidth` such that `(k*, λ*)` is the only
/// zero with `k ≤ k_max` and `|λ − λ*| < w`. Returns 0 if `(k*, λ*)` itself
/// is not found as a zero.
pub fn uniqueness_window(
    spec: &PotentialSpec,
    bp: &BifurcationPoint,
    k_max: usize,
    max_halfwidth: f64,
    n_lambda: usize,
    exec: Exec,
) -> Result<f64> {
    let lo = bp.lambda_star - max_halfwidth;
    let hi = (bp.lambda_star + max_halfwidth).min(1.0 - 1e-9);
    let scan = kernel_scan(spec, 1..=k_max, (lo, hi), n_lambda, exec)?;
    let step = (hi - lo) / (n_lambda - 1) as f64;
    let mut own = false;
    let mut w = max_halfwidth;
    for &(k, l) in &scan.zeros {
        if k == bp.k_star && (l - bp.lambda_star).abs() <= 1e-9 && !own {
            own = true;
        } else {
            w = w.min((l - bp.lambda_star).abs());
        }
    }
    if !own {
        return Ok(0.0);
    }
    // the scan cannot see past the grid spacing
    Ok(if w < max_halfwidth { w } else { max_halfwidth.max(step) })
}

/// Residual of the shifted eigenvalue condition: zero iff `k²μ` is an
/// eigenvalue of the transverse operator at `(k, λ)`.
///
/// Shifting the spectral parameter by `μ` replaces `(λ, β)` with
/// `(λ+μ, β+μ)` because `V₀ + 1{|y|<b} = 1`. The returned value is
/// `kα/(2√(1−β̃)) − ratio(λ̃, β̃)` where `ratio = −φ'(0₊)/(k√(1−β̃))`. For P1
/// the step collapses (`β̃ = λ̃`, ratio 1).
pub fn shifted_eigencondition(spec: &PotentialSpec, k: usize, lambda: f64, mu: f64) -> Result<f64> {
    let lt = lambda + mu;
    let kf = k as f64;
    match spec.case {
        Case::P1 => {
            if !(lt < 1.0) {
                return Err(Error::Regime(format!("lambda + mu = {lt} must be < 1")));
            }
            Ok(kf * spec.alpha / (2.0 * (1.0 - lt).sqrt()) - 1.0)
        }
        Case::P2 => {
            let (beta, b) = spec.step().expect("P2 carries a step");
            let bt = beta + mu;
            if !(lt < 1.0) || StepRegime::of(bt) != StepRegime::Below {
                return Err(Error::Regime(format!("shifted parameters ({lt}, {bt}) must both be < 1")));
            }
            let shifted = PotentialSpec::p2_distributional(spec.alpha, bt, b, spec.gamma);
            let s = (1.0 - bt).sqrt();
            let ratio = -build_mode(&shifted, k, lt)?.phi_prime0() / (kf * s);
            Ok(kf * spec.alpha / (2.0 * s) - ratio)
        }
    }
}

/// Roots `μ` of [`shifted_eigencondition`] below the edge
/// `min(1−λ, 1−β)`, scanning `n` samples from `mu_lo`.
pub fn shifted_roots(spec: &PotentialSpec, k: usize, lambda: f64, mu_lo: f64, n: usize) -> Result<Vec<f64>> {
    let edge = match spec.step() {
        None => 1.0 - lambda,
        Some((beta, _)) => (1.0 - lambda).min(1.0 - beta),
    };
    let hi = edge - 1e-9 * (1.0 + edge.abs());
    if !(mu_lo < hi) {
        return Ok(Vec::new());
    }
    let mus = linspace(mu_lo, hi, n);
    let f = |mu: f64| shifted_eigencondition(spec, k, lambda, mu);
    let vals = mus.iter().map(|&m| f(m)).collect::<Result<Vec<_>>>()?;
    let mut roots = Vec::new();
    for j in 0..n {
        if vals[j] == 0.0 {
            roots.push(mus[j]);
        } else if j + 1 < n && vals[j + 1] != 0.0 && vals[j].signum() != vals[j + 1].signum() {
            roots.push(polish(f, mus[j], mus[j + 1], vals[j], vals[j + 1])?);
        }
    }
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn p1_alpha_star_and_zero() {
        let spec = PotentialSpec::p1_distributional(0.0, 1.0);
        let a = alpha_star(&spec, 2, 0.75).unwrap();
        assert_eq!(a, 0.5);
        let spec = spec.with_alpha(alpha_star(&spec, 2, 0.5).unwrap());
        assert!((spec.alpha - 2f64.sqrt() / 2.0).abs() < 1e-16);
        assert!(a_coeff(&spec, 2, 0.5).unwrap().abs() < 1e-15);
        let k = 4.0;
        let expected = spec.alpha * k * k - 2.0 * k * 0.5f64.sqrt();
        assert!((a_coeff(&spec, 4, 0.5).unwrap() - expected).abs() < 1e-14);
        assert!((a_coeff(&spec, 4, 0.5).unwrap() - 2.0 * spec.alpha * 4.0).abs() < 1e-14);
    }

    #[test]
    fn closed_form_alphas() {
        // β = 1, k* = 1, λ* = 0, b = 1
        let spec = PotentialSpec::p2_distributional(0.0, 1.0, 1.0, 1.0);
        assert!((alpha_star(&spec, 1, 0.0).unwrap() - 1.0).abs() < 1e-15);
        // β < 1 collapsing to P1
        let spec = PotentialSpec::p2_distributional(0.0, 0.3, 2.0, 1.0);
        assert!((alpha_star(&spec, 3, 0.3).unwrap() - 2.0 * 0.7f64.sqrt() / 3.0).abs() < 1e-15);
        // β > 1 at the resonant width
        let beta = 2.0;
        let spec = PotentialSpec::p2_distributional(0.0, beta, PI / (beta - 1.0f64).sqrt(), 1.0);
        for k in 1..5 {
            let expected = 2.0 * 0.6f64.sqrt() / k as f64;
            assert!((alpha_star(&spec, k, 0.4).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_star_gives_zero_for_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..1000 {
            let k = rng.random_range(1..=20);
            let lambda = rng.random_range(-3.0..0.95);
            let spec = match i % 4 {
                0 => PotentialSpec::p1_distributional(0.0, 1.0),
                1 => PotentialSpec::p2_distributional(0.0, rng.random_range(-3.0..0.99), rng.random_range(0.1..3.0), 1.0),
                2 => {
                    let beta: f64 = rng.random_range(1.05..10.0);
                    PotentialSpec::p2_distributional(0.0, beta, PI / (beta - 1.0).sqrt(), 1.0)
                }
                _ => PotentialSpec::p2_distributional(0.0, 1.0, rng.random_range(0.1..3.0), 1.0),
            };
            let spec = spec.with_alpha(alpha_star(&spec, k, lambda).unwrap());
            let a = a_coeff(&spec, k, lambda).unwrap();
            assert!(a.abs() <= 1e-12 * (k * k) as f64, "draw {i}: {a}");
        }
    }

    #[test]
    fn alpha_star_rejects_lambda_one() {
        let spec = PotentialSpec::p1_distributional(0.0, 1.0);
        assert!(alpha_star(&spec, 1, 1.0).is_err());
    }

    #[test]
    fn a_coeff_grows_like_alpha_k_squared() {
        for spec in [
            PotentialSpec::p1_distributional(0.7, 1.0),
            PotentialSpec::p2_distributional(0.7, 0.2, 1.0, 1.0),
            PotentialSpec::p2_distributional(0.7, 3.0, PI / 2f64.sqrt(), 1.0),
        ] {
            let mut max_c: f64 = 0.0;
            for k in 1..=256 {
                let a = a_coeff(&spec, k, 0.1).unwrap();
                let kf = k as f64;
                max_c = max_c.max((a - spec.alpha * kf * kf).abs() / kf.powf(1.5));
                // slope in α is exactly k²
                let a2 = a_coeff(&spec.with_alpha(spec.alpha + 1.0), k, 0.1).unwrap();
                assert!((a2 - a - kf * kf).abs() <= 1e-12 * kf * kf);
            }
            assert!(max_c < 5.0, "{max_c}");
            let k = 256.0;
            assert!((a_coeff(&spec, 256, 0.1).unwrap() / (k * k) - spec.alpha).abs() < 0.02);
        }
    }

    #[test]
    fn scan_finds_single_p1_zero() {
        let base = PotentialSpec::p1_distributional(0.0, 1.0);
        let spec = base.with_alpha(alpha_star(&base, 2, 0.5).unwrap());
        let scan = kernel_scan(&spec, 1..=40, (0.3, 0.7), 2048, Exec::Parallel).unwrap();
        assert_eq!(scan.zeros.len(), 1);
        assert_eq!(scan.zeros[0].0, 2);
        assert!((scan.zeros[0].1 - 0.5).abs() < 1e-10);
        assert!(scan.certifies_uniqueness());
        let seq = kernel_scan(&spec, 1..=40, (0.3, 0.7), 2048, Exec::Sequential).unwrap();
        assert_eq!(seq, scan);
    }

    #[test]
    fn scan_without_delta_is_empty() {
        let spec = PotentialSpec::p1_distributional(0.0, 1.0);
        let scan = kernel_scan(&spec, 1..=20, (-2.0, 0.9), 256, Exec::Sequential).unwrap();
        assert!(scan.zeros.is_empty());
        assert!(scan.residuals.iter().flatten().all(|&a| a < 0.0));
    }

    #[test]
    fn scan_p2_below_one() {
        let base = PotentialSpec::p2_distributional(0.0, 0.0, 1.0, 1.0);
        let spec = base.with_alpha(alpha_star(&base, 1, 0.0).unwrap());
        let scan = kernel_scan(&spec, 1..=30, (-0.5, 0.5), 2048, Exec::Sequential).unwrap();
        assert_eq!(scan.zeros.len(), 1);
        assert_eq!(scan.zeros[0].0, 1);
        assert!(scan.zeros[0].1.abs() < 1e-10);
    }

    #[test]
    fn p1_never_has_two_roots_at_one_lambda() {
        let spec = PotentialSpec::p1_distributional(0.3, 1.0);
        let scan = kernel_scan(&spec, 1..=60, (-1.0, 0.99), 512, Exec::Sequential).unwrap();
        for (j, _) in scan.lambdas.iter().enumerate() {
            let changes = scan
                .residuals
                .windows(2)
                .filter(|w| w[0][j].signum() != w[1][j].signum())
                .count();
            assert!(changes <= 1);
        }
    }

    #[test]
    fn window_reports_nearest_competitor() {
        let base = PotentialSpec::p1_distributional(0.0, 1.0);
        let bp = bifurcation_point(&base, 2, 0.5).unwrap();
        let spec = base.with_alpha(bp.alpha);
        // k = 1 has its zero where √(1−λ) = α/2
        let competitor = 1.0 - (bp.alpha / 2.0).powi(2);
        let w = uniqueness_window(&spec, &bp, 10, 0.45, 4096, Exec::Sequential).unwrap();
        assert!((w - (competitor - 0.5)).abs() < 1e-9, "{w}");
    }

    #[test]
    fn shifted_condition_reductions() {
        let spec = PotentialSpec::p2_distributional(0.9, 0.2, 1.3, 1.0);
        for k in 1..6 {
            let r = shifted_eigencondition(&spec, k, 0.1, 0.0).unwrap();
            let a = a_coeff(&spec, k, 0.1).unwrap();
            assert_eq!(r.signum(), a.signum());
            let s = 0.8f64.sqrt();
            assert!((2.0 * k as f64 * s * r - a).abs() < 1e-12 * (1.0 + a.abs()));
        }
        // collapse β = λ
        let spec = PotentialSpec::p2_distributional(0.9, 0.1, 1.3, 1.0);
        for k in 1..4 {
            let mu = 1.0 - 0.1 - (k as f64 * 0.9 / 2.0).powi(2);
            // λ̃ = β̃ = 0.1 + μ
            if mu + 0.1 < 1.0 {
                assert!(shifted_eigencondition(&spec, k, 0.1, mu).unwrap().abs() < 1e-12);
            }
        }
        assert!(shifted_eigencondition(&spec, 1, 0.1, 0.95).is_err());
    }

    #[test]
    fn shifted_gap_for_high_modes() {
        let base = PotentialSpec::p1_distributional(0.0, 1.0);
        let spec = base.with_alpha(alpha_star(&base, 1, 0.0).unwrap());
        let mut c = f64::INFINITY;
        for k in 2..=32 {
            for mu in shifted_roots(&spec, k, 0.0, -4.0 * (k * k) as f64, 4000).unwrap() {
                c = c.min(mu.abs());
            }
        }
        assert!(c > 0.5, "{c}");
        let p2 = PotentialSpec::p2_distributional(0.0, 0.0, 1.0, 1.0);
        let p2 = p2.with_alpha(alpha_star(&p2, 1, 0.0).unwrap());
        let own = shifted_roots(&p2, 1, 0.0, -4.0, 4000).unwrap();
        assert!(own.iter().any(|m| m.abs() < 1e-10));
        for k in 2..=16 {
            for mu in shifted_roots(&p2, k, 0.0, -4.0 * (k * k) as f64, 4000).unwrap() {
                assert!(mu.abs() > 0.1);
            }
        }
    }
}
