use std::path::PathBuf;

use thiserror::Error;

/// Failures that callers are expected to handle. Contract violations
/// (non-finite scores, acting outside the available set, malformed
/// probability tables) are panics instead: they indicate a bug, not a
/// recoverable condition.
#[derive(Debug, Error)]
pub enum SasRlError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("failed to parse config {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },

    #[error("environment construction failed: {0}")]
    EnvConstruction(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("matrix is numerically singular")]
    SingularMatrix,

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, SasRlError>;

impl SasRlError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        SasRlError::Io {
            context: context.into(),
            source,
        }
    }
}
