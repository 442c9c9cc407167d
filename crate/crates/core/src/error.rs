//! Error type shared by every module.

use thiserror::Error;

/// Broad classes used by the harness to map failures to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Input,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("could not parse configuration: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("positivity violation at t = {t}: 1 + theta/theta_hat = {ratio:e} in cell ({i}, {j})")]
    Positivity { t: f64, ratio: f64, i: usize, j: usize },

    #[error("numerical blow-up at t = {t}: non-finite value in {field}")]
    BlowUp { t: f64, field: &'static str },

    #[error("{solver} did not converge after {iterations} iterations (last relative residual {last:e})")]
    Solver { solver: &'static str, iterations: usize, last: f64, history: Vec<f64> },

    #[error("malformed {what}: {detail}")]
    Decode { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Positivity { .. } | Error::BlowUp { .. } | Error::Solver { .. } => ErrorCategory::Numerical,
            _ => ErrorCategory::Input,
        }
    }

    /// Short machine-readable tag written into reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Parse(_) => "parse",
            Error::Positivity { .. } => "positivity violation",
            Error::BlowUp { .. } => "numerical blow-up",
            Error::Solver { .. } => "solver non-convergence",
            Error::Decode { .. } => "decode",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
