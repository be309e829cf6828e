use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("dimension mismatch: {context} (expected {expected}, got {actual})")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("ill-posed feedback loop: direct feedthrough of P*C equals -1")]
    IllPosedLoop,

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("rank-deficient normal matrix; dependent basis columns {columns:?}")]
    RankDeficient { columns: Vec<usize> },

    #[error("collinear predictors; equiangular direction undefined for columns {columns:?}")]
    Collinear { columns: Vec<usize> },

    #[error("unsupported weights: {0}")]
    UnsupportedWeights(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Solver,
    Io,
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. } => ErrorCategory::Io,
            Error::Config { .. } | Error::Parameter(_) | Error::UnsupportedWeights(_) => {
                ErrorCategory::Validation
            }
            Error::Trial { source, .. } => source.category(),
            Error::InvalidSystem(_)
            | Error::Dimension { .. }
            | Error::IllPosedLoop
            | Error::RankDeficient { .. }
            | Error::Collinear { .. } => ErrorCategory::Solver,
        }
    }
}
