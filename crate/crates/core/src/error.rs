use std::path::PathBuf;

/// Errors raised across the processing stages.
///
/// Variants fall into two families that callers (the CLI in particular) treat
/// differently: input/usage problems, and method degeneracies where the input
/// was well formed but the method could not produce a meaningful result.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("value count mismatch: header declares {expected} cells, found {found}")]
    ValueCountMismatch { expected: usize, found: usize },

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    /// The method ran on valid input but has no meaningful answer
    /// (single-mode histogram, no bimodal tiles, empty flood, ...).
    #[error("{0}")]
    Degenerate(String),

    #[error("sweep interrupted after {completed} records")]
    Interrupted { completed: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn degenerate(message: impl Into<String>) -> Self {
        Error::Degenerate(message.into())
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }

    /// True for method-degeneracy failures, as opposed to bad input.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::Degenerate(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
