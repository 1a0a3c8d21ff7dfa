use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing labels: {0}")]
    MissingLabels(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// A recording, series or label sequence violates an ingest invariant.
    #[error("{0}")]
    Validation(String),

    #[error("non-positive heart rate {0} bpm")]
    NonPositiveHeartRate(f64),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("model file: {0}")]
    ModelFile(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }

    /// True for errors caused by bad input data rather than usage or numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MissingLabels(_)
                | Error::Io { .. }
                | Error::Parse { .. }
                | Error::Validation(_)
                | Error::NonPositiveHeartRate(_)
                | Error::ModelFile(_)
        )
    }
}
