//! Error type shared by every module of the crate.

use thiserror::Error;

/// Everything that can go wrong while building families, running strategies
/// or generating data.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("functional `{0}` has no scoring function")]
    UnsupportedScore(String),

    #[error("functional `{0}` has no identification function")]
    UnsupportedIdent(String),

    #[error("no closed form or numerical routine for {functional} under {reference}")]
    UnsupportedPair { functional: String, reference: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("psi evaluated at u = {u} outside [0, {u_max})")]
    Range { u: f64, u_max: f64 },

    #[error("size limit exceeded: {0}")]
    Size(String),

    #[error("nonpositive wealth increment {value} at step {step}")]
    NonpositiveIncrement { value: f64, step: usize },

    #[error("inner solver did not converge after {iterations} iterations (residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("observation {step}: coordinate {coordinate} = {value} outside declared range [{lo}, {hi}]")]
    DataRange { step: usize, coordinate: usize, value: f64, lo: f64, hi: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Checks that a slice has the expected length.
pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
