use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied arguments or configuration violate a contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A data file is malformed. `line` is 1-based and counts the header.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Data(String),

    #[error("leakage: {0}")]
    Leakage(String),

    #[error("did not converge: {0}")]
    NoConvergence(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("seed {seed}, {stage}: {source}")]
    Stage {
        seed: u64,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn in_stage(self, seed: u64, stage: &'static str) -> Self {
        Error::Stage {
            seed,
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad inputs (configuration, arguments or data
    /// files) as opposed to runtime failures such as I/O or numerical breakdown.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidInput(_)
            | Error::Shape(_)
            | Error::Parse { .. }
            | Error::Data(_)
            | Error::Leakage(_)
            | Error::Json(_)
            | Error::Csv(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            Error::NonFinite(_) | Error::NoConvergence(_) | Error::Undefined(_) | Error::Io { .. } => false,
        }
    }
}
