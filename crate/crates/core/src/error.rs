use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input data or configuration.
    Data,
    /// A numerical routine diverged or failed to converge.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("sampler failed: {0}")]
    Sampler(String),

    #[error("degree generation failed: {0}")]
    DegreeGeneration(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("instance out of scope: {0}")]
    Scope(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    Eigensolver { iterations: usize, residual: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("statistic undefined: {0}")]
    Undefined(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Eigensolver { .. } | Error::NonFinite(_) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
