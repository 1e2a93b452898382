use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("malformed PGM: {0}")]
    Parse(String),

    #[error("scene must be binary: {0}")]
    NonBinary(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: String, actual: String },

    #[error("index {index} out of range (0..={max})")]
    Index { index: usize, max: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("degenerate scene: {0}")]
    DegenerateScene(String),

    #[error("measurement provenance mismatch: {0}")]
    Provenance(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
