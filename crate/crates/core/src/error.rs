use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the models, solvers and data pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("statistic has a non-finite entry at position {0}")]
    NonFiniteStatistic(usize),

    #[error("statistic has length {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("example index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("statistic cannot be mapped to parameters: {0}")]
    Unrepairable(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: String,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Data(String),

    #[error("run diverged at epoch {epoch}: {what}")]
    Diverged { epoch: usize, what: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(vec![msg.into()])
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
