//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by any toolkit operation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// I/O failure, annotated with the path that caused it.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A text file failed to parse at a specific line.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// A binary or tabular file does not match its expected layout.
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    /// Source systems present in the input but absent from the label map.
    #[error("unknown source system(s): {}", names.join(", "))]
    UnknownSystem { names: Vec<String> },

    /// The same utterance id appeared twice in one input.
    #[error("duplicate utterance id `{id}`")]
    DuplicateId { id: String },

    /// A precondition on operation inputs was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration document is malformed or inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Audio could not be decoded or is unusable.
    #[error("audio error: {0}")]
    Audio(String),

    /// Training produced a non-finite loss or activation.
    #[error("training diverged: {0}")]
    Diverged(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
