use thiserror::Error;

use crate::domain::Diagnostic;

#[derive(Debug, Error)]
pub enum Error {
    #[error("outside parameter regime: {0}")]
    Regime(String),

    #[error("truncation exceeds support: requested {requested}, support {support}")]
    Truncation { requested: usize, support: usize },

    #[error("length mismatch: {left} vs {right}")]
    Mismatch { left: usize, right: usize },

    #[error("interface off-grid: y = {0} is not a grid node")]
    InterfaceOffGrid(f64),

    #[error("operator singular: run kernel_scan ({0})")]
    Singular(String),

    #[error("eigensolver failed to converge: {0}")]
    EigenConvergence(String),

    #[error("Newton divergence after {iterations} iterations (last residual {last_residual:e})")]
    NewtonDiverged {
        iterations: usize,
        last_residual: f64,
        history: Vec<f64>,
        last_iterate: Vec<f64>,
    },

    #[error("fold or symmetry-degenerate point: extended Jacobian singular")]
    Degenerate,

    #[error("invalid configuration: {}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("grid outside domain: {0}")]
    Grid(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.message.as_str())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
