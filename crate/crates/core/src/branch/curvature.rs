//! Closed-form curvature candidates `λ̈(0)` and their adjudication by a
//! quadratic fit of a traced branch.
//!
//! The candidate formulas disagree by constant factors, so they are all
//! evaluated and the traced branch decides.

use serde::Serialize;

use super::BranchPoint;
use crate::domain::{BifurcationPoint, Case, GammaMode, PotentialSpec};
use crate::error::{Error, Result};
use crate::modes::build_mode;
use crate::quad::GaussLegendre;

/// Relative match tolerance in the distributional setting.
pub const MATCH_TOL_DISTRIBUTIONAL: f64 = 0.02;
/// Relative match tolerance in the regular setting.
pub const MATCH_TOL_REGULAR: f64 = 0.05;
/// Only points with `|ε|` at most this enter a fit.
pub const FIT_EPS_MAX: f64 = 0.1;
pub const MIN_FIT_POINTS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Candidate {
    pub label: String,
    pub value: f64,
}

impl Candidate {
    fn new(label: &str, value: f64) -> Self {
        Self { label: label.to_string(), value }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvatureReport {
    /// Fitted `λ̈(0)`, from `λ − λ* ≈ ½λ̈ε²`.
    pub measured: f64,
    pub lambda_star: f64,
    /// `‖y − qx‖₂/‖y‖₂` of the one-parameter fit.
    pub fit_residual: f64,
    pub n_fit: usize,
    pub candidates: Vec<Candidate>,
    /// Label of the unique candidate within tolerance, `"none"` or `"ambiguous"`.
    pub best_match: String,
    /// Relative gap to the closest candidate.
    pub relative_gap: f64,
    pub tolerance: f64,
}

impl CurvatureReport {
    pub fn is_unique_match(&self) -> bool {
        self.best_match != "none" && self.best_match != "ambiguous"
    }
}

/// `R = ∫Γφ*⁴ / ∫V₀φ*²` for the `L²(ℝ)`-normalized kernel `φ*`.
pub fn regular_ratio(spec: &PotentialSpec, bp: &BifurcationPoint) -> Result<f64> {
    let spec = spec.with_alpha(bp.alpha);
    let m = build_mode(&spec, bp.k_star, bp.lambda_star)?;
    let kappa = m.kappa_out;
    let quartic: f64 = match spec.case {
        Case::P1 => {
            // antiderivative of e^{−4κ|y|}
            let f = |y: f64| y.signum() * -(-4.0 * kappa * y.abs()).exp_m1() / (4.0 * kappa);
            spec.gamma_profile.iter().map(|g| g.value * (f(g.y_hi) - f(g.y_lo))).sum()
        }
        Case::P2 => {
            let gl = GaussLegendre::new(40);
            let b = spec.b.unwrap_or(0.0);
            spec.gamma_profile
                .iter()
                .map(|g| {
                    let mut cuts = vec![g.y_lo, g.y_hi];
                    cuts.extend([-b, 0.0, b].into_iter().filter(|&c| c > g.y_lo && c < g.y_hi));
                    cuts.sort_by(f64::total_cmp);
                    let s: f64 = cuts
                        .windows(2)
                        .map(|w| gl.integrate_panels(w[0], w[1], 16, |y| m.value(y).powi(4)))
                        .sum();
                    g.value * s
                })
                .sum()
        }
    };
    // whole-line norms are twice the half-line ones
    Ok(quartic / (4.0 * m.l2_sq() * m.v0_l2_sq()))
}

/// All closed-form candidates for `λ̈(0)`; the first one seeds predictors.
pub fn lambda_ddot_candidates(spec: &PotentialSpec, bp: &BifurcationPoint) -> Result<Vec<Candidate>> {
    let spec = spec.with_alpha(bp.alpha);
    match spec.mode {
        GammaMode::DistributionalGamma => {
            let m = build_mode(&spec, bp.k_star, bp.lambda_star)?;
            let half = m.v0_l2_sq();
            let g = spec.gamma;
            let mut out = vec![
                Candidate::new("whole_line_v0", -3.0 * g / (4.0 * 2.0 * half)),
                Candidate::new("half_line_v0", -3.0 * g / (4.0 * half)),
            ];
            if spec.case == Case::P1 {
                let rate = bp.k_star as f64 * (1.0 - bp.lambda_star).sqrt();
                out.push(Candidate::new("decay_rate", -g * rate));
            }
            Ok(out)
        }
        GammaMode::RegularGamma => {
            let r = regular_ratio(&spec, bp)?;
            Ok(vec![
                Candidate::new("three_halves_r", -1.5 * r),
                Candidate::new("three_pi_halves_r", -1.5 * std::f64::consts::PI * r),
            ])
        }
    }
}

/// Fits `λ − λ* = qε²` on the smallest-`|ε|` half of the points with
/// `0 < |ε| ≤ 0.1` and reports `λ̈ = 2q` against `candidates`.
pub fn measure_curvature(
    points: &[BranchPoint],
    lambda_star: f64,
    candidates: &[Candidate],
    tolerance: f64,
) -> Result<CurvatureReport> {
    let mut usable: Vec<&BranchPoint> =
        points.iter().filter(|p| p.eps != 0.0 && p.eps.abs() <= FIT_EPS_MAX).collect();
    if usable.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} points with 0 < |ε| ≤ {FIT_EPS_MAX}, need {MIN_FIT_POINTS}",
            usable.len()
        )));
    }
    usable.sort_by(|a, b| a.eps.abs().total_cmp(&b.eps.abs()));
    let n_fit = usable.len().div_ceil(2).max(MIN_FIT_POINTS.min(usable.len()));
    let fit = &usable[..n_fit];
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for p in fit {
        let x = p.eps * p.eps;
        let y = p.lambda - lambda_star;
        sxy += x * y;
        sxx += x * x;
        syy += y * y;
    }
    let q = sxy / sxx;
    let rss: f64 = fit.iter().map(|p| (p.lambda - lambda_star - q * p.eps * p.eps).powi(2)).sum();
    let fit_residual = if syy > 0.0 { (rss / syy).sqrt() } else { 0.0 };
    let measured = 2.0 * q;

    let gap = |c: &Candidate| {
        if c.value == 0.0 {
            if measured == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            ((measured - c.value) / c.value).abs()
        }
    };
    let matches: Vec<&Candidate> = candidates.iter().filter(|c| gap(c) <= tolerance).collect();
    let best_match = match matches.as_slice() {
        [] => "none".to_string(),
        [c] => c.label.clone(),
        _ => "ambiguous".to_string(),
    };
    let relative_gap = candidates.iter().map(gap).fold(f64::INFINITY, f64::min);
    Ok(CurvatureReport {
        measured,
        lambda_star,
        fit_residual,
        n_fit,
        candidates: candidates.to_vec(),
        best_match,
        relative_gap,
        tolerance,
    })
}

/// Re-traces with halved `eps_max` while the report is ambiguous, at most
/// `max_halvings` times. `trace` maps an `eps_max` to branch points.
pub fn adjudicate(
    mut trace: impl FnMut(f64) -> Result<Vec<BranchPoint>>,
    eps_max: f64,
    lambda_star: f64,
    candidates: &[Candidate],
    tolerance: f64,
    max_halvings: usize,
) -> Result<(CurvatureReport, f64)> {
    let mut e = eps_max;
    let mut halvings = 0;
    loop {
        let pts = trace(e)?;
        let report = measure_curvature(&pts, lambda_star, candidates, tolerance)?;
        if report.best_match != "ambiguous" || halvings >= max_halvings {
            return Ok((report, e));
        }
        e *= 0.5;
        halvings += 1;
    }
}
