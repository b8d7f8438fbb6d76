use std::path::PathBuf;

use thiserror::Error;

use crate::kg_data::Triple;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {location}:{line}: {message}")]
    Parse {
        location: String,
        line: usize,
        message: String,
    },

    #[error("vocabulary error: {0}")]
    Vocab(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate context: {0}")]
    DegenerateContext(String),

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("constraint error: {0}")]
    Constraint(String),

    #[error("training triple {triple:?} violates the domain constraints")]
    ConstraintViolation { triple: Triple },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad numerics rather than bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_) | Error::DegenerateContext(_) | Error::DegenerateModel(_)
        )
    }
}
