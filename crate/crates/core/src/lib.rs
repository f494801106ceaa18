//! Bifurcating traveling waves of a quasilinear wave equation with
//! delta-type coefficients.
//!
//! The crate computes branches of solutions of
//! `−Φ_yy − (1 − λV₀ − V₁)Φ_xx + Γ(Φ³)_xx = 0` of the form
//! `Φ = Σ a_k φ_k(|y|) sin(kx)`, where `V₁` carries a delta at `y = 0` and
//! `Γ` is either a bounded profile or a delta. Closed-form mode functions
//! drive the distributional solver; a finite-difference discretization
//! drives the regular one and doubles as an independent check.
//!
//! Modules, bottom up:
//! - [`domain`]: coefficient data, configuration, validation
//! - [`seqalg`]: odd sine-series sequences and their convolutions
//! - [`modes`]: closed-form mode functions `φ_k(y; λ)`
//! - [`dispersion`]: dispersion coefficients, bifurcation points, scans
//! - [`schrod`]: discretized transverse operators, eigenpairs, projected solves
//! - [`branch`]: Newton correctors, continuation, curvature adjudication
//! - [`fieldio`]: field reconstruction, weak residuals, file formats

pub mod branch;
pub mod dispersion;
pub mod domain;
pub mod error;
pub mod fieldio;
pub mod linalg;
pub mod modes;
pub mod par;
pub mod quad;
pub mod schrod;
pub mod seqalg;
pub mod tridiag;

pub use domain::{
    validate, BranchTarget, Case, Diagnostic, GammaInterval, GammaMode, PotentialSpec, RunConfig, Severity,
    SolverConfig,
};
pub use error::{Error, Result};
pub use seqalg::OddSpectrum;
