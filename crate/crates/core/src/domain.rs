//! Coefficient data, solver configuration and input validation.
//!
//! A run is described by a [`PotentialSpec`] (which background, which
//! nonlinearity) and a [`SolverConfig`] (truncation, grids, Newton and
//! branch settings). Both are plain immutable values. [`validate`] reports
//! every violated invariant; solver entry points call [`ensure_valid`] and
//! refuse inputs that carry an error-level diagnostic.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Background profile of the linear potential.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    /// Delta potential on a constant background: `V = λ + αδ₀`.
    P1,
    /// Delta potential on a step: `V = λ·1{|y|≥b} + β·1{|y|<b} + αδ₀`.
    P2,
}

/// Whether the cubic coefficient is a bounded profile or a delta at `y = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GammaMode {
    RegularGamma,
    DistributionalGamma,
}

/// One constant piece `value` of the regular cubic coefficient on `[y_lo, y_hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct GammaInterval {
    pub y_lo: f64,
    pub y_hi: f64,
    pub value: f64,
}

impl From<[f64; 3]> for GammaInterval {
    fn from(v: [f64; 3]) -> Self {
        Self { y_lo: v[0], y_hi: v[1], value: v[2] }
    }
}

impl From<GammaInterval> for [f64; 3] {
    fn from(g: GammaInterval) -> Self {
        [g.y_lo, g.y_hi, g.value]
    }
}

/// Where the step height sits relative to the unit background.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRegime {
    /// `β < 1`: hyperbolic inner piece.
    Below,
    /// `β = 1`: linear inner piece.
    Unit,
    /// `β > 1`: oscillatory inner piece.
    Above,
}

/// `|β − 1|` below this is treated as the linear `β = 1` regime.
pub const UNIT_STEP_TOL: f64 = 1e-12;

impl StepRegime {
    pub fn of(beta: f64) -> Self {
        if (beta - 1.0).abs() <= UNIT_STEP_TOL {
            StepRegime::Unit
        } else if beta < 1.0 {
            StepRegime::Below
        } else {
            StepRegime::Above
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub case: Case,
    /// Delta strength in the linear potential.
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Delta strength of the cubic coefficient (distributional mode).
    #[serde(default)]
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gamma_profile: Vec<GammaInterval>,
    pub mode: GammaMode,
}

impl PotentialSpec {
    /// P1 background with a delta-type cubic coefficient.
    pub fn p1_distributional(alpha: f64, gamma: f64) -> Self {
        Self {
            case: Case::P1,
            alpha,
            beta: None,
            b: None,
            gamma,
            gamma_profile: Vec::new(),
            mode: GammaMode::DistributionalGamma,
        }
    }

    /// P1 background with a piecewise-constant cubic coefficient.
    pub fn p1_regular(alpha: f64, profile: Vec<GammaInterval>) -> Self {
        Self {
            case: Case::P1,
            alpha,
            beta: None,
            b: None,
            gamma: 0.0,
            gamma_profile: profile,
            mode: GammaMode::RegularGamma,
        }
    }

    pub fn p2_distributional(alpha: f64, beta: f64, b: f64, gamma: f64) -> Self {
        Self {
            case: Case::P2,
            alpha,
            beta: Some(beta),
            b: Some(b),
            gamma,
            gamma_profile: Vec::new(),
            mode: GammaMode::DistributionalGamma,
        }
    }

    pub fn p2_regular(alpha: f64, beta: f64, b: f64, profile: Vec<GammaInterval>) -> Self {
        Self {
            case: Case::P2,
            alpha,
            beta: Some(beta),
            b: Some(b),
            gamma: 0.0,
            gamma_profile: profile,
            mode: GammaMode::RegularGamma,
        }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self { alpha, ..self.clone() }
    }

    /// Step data `(β, b)`; `None` for P1.
    pub fn step(&self) -> Option<(f64, f64)> {
        match self.case {
            Case::P1 => None,
            Case::P2 => Some((self.beta.unwrap_or(f64::NAN), self.b.unwrap_or(f64::NAN))),
        }
    }

    /// `V₀(y)`: weight of the bifurcation parameter. Uses `|y| ≥ b` on the step.
    pub fn v0(&self, y: f64) -> f64 {
        match self.step() {
            None => 1.0,
            Some((_, b)) => {
                if y.abs() >= b {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `W(y)`: regular part of the parameter-independent potential.
    pub fn w(&self, y: f64) -> f64 {
        match self.step() {
            None => 0.0,
            Some((beta, b)) => {
                if y.abs() < b {
                    beta
                } else {
                    0.0
                }
            }
        }
    }

    /// Regular cubic coefficient `Γ(y)`; zero outside the profile.
    pub fn gamma_at(&self, y: f64) -> f64 {
        self.gamma_profile
            .iter()
            .find(|g| y >= g.y_lo && y <= g.y_hi)
            .map_or(0.0, |g| g.value)
    }

    /// Points where the coefficients jump (excluding `y = 0`), sorted.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = Vec::new();
        if let Some((_, b)) = self.step() {
            pts.push(-b);
            pts.push(b);
        }
        if self.mode == GammaMode::RegularGamma {
            for g in &self.gamma_profile {
                pts.push(g.y_lo);
                pts.push(g.y_hi);
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }
}

/// Requested bifurcation wavenumber and parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchTarget {
    pub k_star: usize,
    pub lambda_star: f64,
}

/// A certified-or-candidate bifurcation point and the `α` it induces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPoint {
    pub k_star: usize,
    pub lambda_star: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Fourier truncation.
    #[serde(rename = "K")]
    pub k_max: usize,
    /// Sequence-norm index.
    pub s: f64,
    pub y_max: f64,
    /// Grid points on `[0, y_max]`, both ends included.
    pub n_y: usize,
    pub tol_newton: f64,
    pub max_newton_iters: usize,
    pub eps_max: f64,
    pub n_branch: usize,
    pub target: Option<BranchTarget>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            k_max: 12,
            s: 2.5,
            y_max: 40.0,
            n_y: 8001,
            tol_newton: 1e-12,
            max_newton_iters: 20,
            eps_max: 0.1,
            n_branch: 32,
            target: None,
        }
    }
}

impl SolverConfig {
    /// Grid spacing of the finite-difference discretization.
    pub fn h(&self) -> f64 {
        self.y_max / (self.n_y.max(2) - 1) as f64
    }

    pub fn with_target(mut self, k_star: usize, lambda_star: f64) -> Self {
        self.target = Some(BranchTarget { k_star, lambda_star });
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: &'static str,
    pub message: String,
}

impl Diagnostic {
    fn error(code: &'static str, message: impl Into<String>) -> Self {
        Self { severity: Severity::Error, code, message: message.into() }
    }

    fn warning(code: &'static str, message: impl Into<String>) -> Self {
        Self { severity: Severity::Warning, code, message: message.into() }
    }
}

fn on_grid(y: f64, h: f64) -> bool {
    let r = y / h;
    (r - r.round()).abs() <= 1e-9 * r.abs().max(1.0)
}

/// Every violated invariant of `(spec, cfg)`, one diagnostic each.
pub fn validate(spec: &PotentialSpec, cfg: &SolverConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    if !spec.alpha.is_finite() || spec.alpha < 0.0 {
        out.push(Diagnostic::error("alpha", "alpha must be a finite non-negative number"));
    } else if cfg.target.is_some() && spec.alpha <= 0.0 {
        out.push(Diagnostic::error("alpha", "alpha must be positive"));
    }
    if !spec.gamma.is_finite() {
        out.push(Diagnostic::error("gamma", "gamma must be finite"));
    }

    match spec.case {
        Case::P1 => {
            if spec.beta.is_some() || spec.b.is_some() {
                out.push(Diagnostic::warning("p1_step", "beta and b are ignored for case P1"));
            }
        }
        Case::P2 => match (spec.beta, spec.b) {
            (Some(beta), Some(b)) => {
                if !beta.is_finite() {
                    out.push(Diagnostic::error("beta", "beta must be finite"));
                }
                if !(b.is_finite() && b > 0.0) {
                    out.push(Diagnostic::error("b", "b must be positive"));
                }
                if beta.is_finite() && StepRegime::of(beta) == StepRegime::Above {
                    let resonant = PI / (beta - 1.0).sqrt();
                    if (b - resonant).abs() > 1e-12 * resonant {
                        out.push(Diagnostic::warning(
                            "b_resonance",
                            "b differs from π/√(β−1): run kernel_scan before tracing",
                        ));
                    }
                }
            }
            _ => out.push(Diagnostic::error("p2_step", "case P2 requires beta and b")),
        },
    }

    match spec.mode {
        GammaMode::RegularGamma => {
            if spec.gamma_profile.is_empty() {
                out.push(Diagnostic::error("gamma_profile", "regular Γ requires a nonempty gamma_profile"));
            }
            if spec
                .gamma_profile
                .iter()
                .any(|g| !(g.y_lo.is_finite() && g.y_hi.is_finite() && g.value.is_finite() && g.y_lo < g.y_hi))
            {
                out.push(Diagnostic::error("gamma_profile", "Γ intervals must be finite with y_lo < y_hi"));
            }
            let mut sorted = spec.gamma_profile.clone();
            sorted.sort_by(|a, b| a.y_lo.total_cmp(&b.y_lo));
            if sorted.windows(2).any(|w| w[1].y_lo < w[0].y_hi) {
                out.push(Diagnostic::error("gamma_overlap", "overlapping Γ intervals"));
            }
        }
        GammaMode::DistributionalGamma => {
            if !spec.gamma_profile.is_empty() {
                out.push(Diagnostic::error(
                    "gamma_profile",
                    "gamma_profile must be absent for distributional Γ",
                ));
            }
        }
    }

    if cfg.k_max < 1 {
        out.push(Diagnostic::error("K", "K must be at least 1"));
    }
    if !(cfg.s >= 2.5) {
        out.push(Diagnostic::error("s", "s must be at least 5/2"));
    }
    if !(cfg.y_max.is_finite() && cfg.y_max > 0.0) {
        out.push(Diagnostic::error("y_max", "y_max must be positive"));
    }
    if cfg.n_y < 3 {
        out.push(Diagnostic::error("n_y", "n_y must be at least 3"));
    }
    if !(cfg.tol_newton > 0.0) {
        out.push(Diagnostic::error("tol_newton", "tol_newton must be positive"));
    }
    if cfg.max_newton_iters < 1 {
        out.push(Diagnostic::error("max_newton_iters", "max_newton_iters must be at least 1"));
    }
    if !(cfg.eps_max.is_finite() && cfg.eps_max > 0.0) {
        out.push(Diagnostic::error("eps_max", "eps_max must be positive"));
    }
    if cfg.n_branch < 1 {
        out.push(Diagnostic::error("n_branch", "n_branch must be at least 1"));
    }

    if let Some(t) = cfg.target {
        if t.k_star < 1 {
            out.push(Diagnostic::error("k_star", "k_star must be at least 1"));
        }
        if !(t.lambda_star < 1.0) || !t.lambda_star.is_finite() {
            out.push(Diagnostic::error("lambda_star", "lambda_star must be finite and < 1"));
        } else {
            if cfg.k_max < 3 * t.k_star {
                out.push(Diagnostic::error("K", "K must be at least 3·k_star"));
            }
            let decay = cfg.y_max * t.k_star as f64 * (1.0 - t.lambda_star).sqrt();
            if decay < 20.0 {
                out.push(Diagnostic::error("y_max", "y_max·k_star·√(1−lambda_star) must be at least 20"));
            }
        }
    }

    if spec.mode == GammaMode::RegularGamma && cfg.n_y >= 3 && cfg.y_max > 0.0 {
        let h = cfg.h();
        if spec
            .breakpoints()
            .iter()
            .filter(|y| y.abs() < cfg.y_max)
            .any(|&y| !on_grid(y, h))
        {
            out.push(Diagnostic::error("grid", "interface off-grid: b and Γ endpoints must be grid nodes"));
        }
    }

    out
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

/// Fails with [`Error::Invalid`] if `validate` reports any error-level diagnostic.
pub fn ensure_valid(spec: &PotentialSpec, cfg: &SolverConfig) -> Result<()> {
    let diags = validate(spec, cfg);
    if has_errors(&diags) {
        Err(Error::Invalid(diags.into_iter().filter(|d| d.severity == Severity::Error).collect()))
    } else {
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PotentialSection {
    case: Case,
    alpha: Option<f64>,
    beta: Option<f64>,
    b: Option<f64>,
    #[serde(default)]
    gamma: f64,
    #[serde(default)]
    gamma_profile: Vec<GammaInterval>,
    mode: GammaMode,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    #[serde(rename = "K")]
    k_max: Option<usize>,
    s: Option<f64>,
    y_max: Option<f64>,
    n_y: Option<usize>,
    tol_newton: Option<f64>,
    max_newton_iters: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchSection {
    k_star: usize,
    lambda_star: f64,
    eps_max: Option<f64>,
    n_branch: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    potential: PotentialSection,
    solver: Option<SolverSection>,
    branch: Option<BranchSection>,
}

/// A parsed configuration document.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub potential: PotentialSpec,
    pub solver: SolverConfig,
}

impl RunConfig {
    /// Parses a configuration document. Unknown keys are errors. When
    /// `alpha` is omitted it is derived from `[branch]`; for `β > 1` an
    /// omitted `b` is set to `π/√(β−1)`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: RunFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let defaults = SolverConfig::default();
        let mut solver = defaults.clone();
        if let Some(s) = file.solver {
            solver.k_max = s.k_max.unwrap_or(defaults.k_max);
            solver.s = s.s.unwrap_or(defaults.s);
            solver.y_max = s.y_max.unwrap_or(defaults.y_max);
            solver.n_y = s.n_y.unwrap_or(defaults.n_y);
            solver.tol_newton = s.tol_newton.unwrap_or(defaults.tol_newton);
            solver.max_newton_iters = s.max_newton_iters.unwrap_or(defaults.max_newton_iters);
        }
        if let Some(b) = &file.branch {
            solver.eps_max = b.eps_max.unwrap_or(defaults.eps_max);
            solver.n_branch = b.n_branch.unwrap_or(defaults.n_branch);
            solver.target = Some(BranchTarget { k_star: b.k_star, lambda_star: b.lambda_star });
        }

        let p = file.potential;
        let mut b = p.b;
        if p.case == Case::P2 && b.is_none() {
            if let Some(beta) = p.beta {
                if StepRegime::of(beta) == StepRegime::Above {
                    b = Some(PI / (beta - 1.0).sqrt());
                }
            }
        }
        let mut potential = PotentialSpec {
            case: p.case,
            alpha: p.alpha.unwrap_or(0.0),
            beta: p.beta,
            b,
            gamma: p.gamma,
            gamma_profile: p.gamma_profile,
            mode: p.mode,
        };
        match (p.alpha, solver.target) {
            (Some(_), _) => {}
            (None, Some(t)) => {
                potential.alpha = crate::dispersion::alpha_star(&potential, t.k_star, t.lambda_star)?;
            }
            (None, None) => {
                return Err(Error::Parse("alpha must be given unless [branch] determines it".into()))
            }
        }
        Ok(Self { potential, solver })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        validate(&self.potential, &self.solver)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codes(d: &[Diagnostic]) -> Vec<&'static str> {
        d.iter().map(|d| d.code).collect()
    }

    #[test]
    fn zero_alpha_with_branch_is_rejected() {
        let spec = PotentialSpec::p1_distributional(0.0, 1.0);
        let cfg = SolverConfig::default().with_target(1, 0.0);
        let d = validate(&spec, &cfg);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].message, "alpha must be positive");
        assert!(ensure_valid(&spec, &cfg).is_err());
    }

    #[test]
    fn well_formed_p1_is_clean() {
        let spec = PotentialSpec::p1_distributional(2.0, 1.0);
        let cfg = SolverConfig::default().with_target(1, 0.0);
        assert!(validate(&spec, &cfg).is_empty());
    }

    #[test]
    fn overlapping_profile_is_flagged() {
        let profile = vec![
            GammaInterval { y_lo: -1.0, y_hi: 0.5, value: 1.0 },
            GammaInterval { y_lo: 0.0, y_hi: 1.0, value: 2.0 },
        ];
        let spec = PotentialSpec::p2_regular(1.0, 0.5, 1.0, profile);
        let cfg = SolverConfig { n_y: 4001, ..SolverConfig::default() };
        let d = validate(&spec, &cfg);
        assert!(d.iter().any(|d| d.message == "overlapping Γ intervals"), "{d:?}");
    }

    #[test]
    fn validate_is_pure() {
        let spec = PotentialSpec::p2_distributional(-1.0, 3.0, 1.0, f64::NAN);
        let cfg = SolverConfig { k_max: 0, tol_newton: 0.0, ..SolverConfig::default() };
        assert_eq!(validate(&spec, &cfg), validate(&spec, &cfg));
        let c = codes(&validate(&spec, &cfg));
        for expected in ["alpha", "gamma", "b_resonance", "K", "tol_newton"] {
            assert!(c.contains(&expected), "missing {expected} in {c:?}");
        }
    }

    #[test]
    fn truncation_and_decay_rules() {
        let spec = PotentialSpec::p1_distributional(1.0, 1.0);
        let cfg = SolverConfig { k_max: 5, y_max: 5.0, ..SolverConfig::default() }.with_target(2, 0.0);
        let c = codes(&validate(&spec, &cfg));
        assert!(c.contains(&"K"));
        assert!(c.contains(&"y_max"));
    }

    #[test]
    fn distributional_rejects_profile_and_p1_flags_step() {
        let mut spec = PotentialSpec::p1_distributional(1.0, 1.0);
        spec.gamma_profile.push(GammaInterval { y_lo: -1.0, y_hi: 1.0, value: 1.0 });
        spec.beta = Some(0.2);
        let d = validate(&spec, &SolverConfig::default());
        assert!(d.iter().any(|d| d.code == "gamma_profile" && d.severity == Severity::Error));
        assert!(d.iter().any(|d| d.code == "p1_step" && d.severity == Severity::Warning));
    }

    #[test]
    fn lambda_star_at_one_is_invalid() {
        let spec = PotentialSpec::p1_distributional(1.0, 1.0);
        let cfg = SolverConfig::default().with_target(1, 1.0);
        assert!(codes(&validate(&spec, &cfg)).contains(&"lambda_star"));
    }

    #[test]
    fn parses_config_and_rejects_unknown_keys() {
        let text = r#"
[potential]
case = "P1"
gamma = 1.0
mode = "DistributionalGamma"

[solver]
K = 12
tol_newton = 1e-12

[branch]
k_star = 1
lambda_star = 0.0
eps_max = 0.1
n_branch = 32
"#;
        let run = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(run.potential.alpha, 2.0);
        assert_eq!(run.solver.k_max, 12);
        assert!(run.validate().is_empty());

        let typo = text.replace("tol_newton", "tol_newtn");
        assert!(matches!(RunConfig::from_toml_str(&typo), Err(Error::Parse(_))));
    }

    #[test]
    fn resonant_width_is_filled_in() {
        let text = r#"
[potential]
case = "P2"
alpha = 1.0
beta = 5.0
gamma = 1.0
mode = "DistributionalGamma"
"#;
        let run = RunConfig::from_toml_str(text).unwrap();
        assert!((run.potential.b.unwrap() - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn regular_profile_must_sit_on_grid() {
        let profile = vec![GammaInterval { y_lo: -1.0001, y_hi: 1.0, value: 1.0 }];
        let spec = PotentialSpec::p1_regular(2.0, profile);
        let cfg = SolverConfig { y_max: 20.0, n_y: 4001, ..SolverConfig::default() };
        assert!(codes(&validate(&spec, &cfg)).contains(&"grid"));
    }
}
