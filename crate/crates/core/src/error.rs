use std::path::PathBuf;

use crate::sdp::SolveStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A solver did not reach an optimal certificate.
    #[error("{context}: solver status {status:?}{}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Solver {
        status: SolveStatus,
        iteration: Option<usize>,
        context: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn solver(status: SolveStatus, context: impl Into<String>) -> Self {
        Error::Solver {
            status,
            iteration: None,
            context: context.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tags a solver error with the outer iteration at which it occurred.
    pub(crate) fn at_iteration(self, i: usize) -> Self {
        match self {
            Error::Solver { status, context, .. } => Error::Solver {
                status,
                iteration: Some(i),
                context,
            },
            other => other,
        }
    }

    /// Solver status carried by this error, if any.
    pub fn status(&self) -> Option<SolveStatus> {
        match self {
            Error::Solver { status, .. } => Some(*status),
            _ => None,
        }
    }
}
