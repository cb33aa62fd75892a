use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the pipeline.
///
/// The variants are coarse on purpose: the CLI maps them onto three exit
/// codes (validation, I/O, numerical), so each variant belongs to exactly one
/// of those families. See [`Error::family`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("input too short: {0}")]
    Length(String),

    #[error("unsupported audio format: {0}")]
    Format(String),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("missing row for {event_id}:{line_no} in {what}")]
    MissingKey {
        what: String,
        event_id: String,
        line_no: u32,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint format: {0}")]
    Checkpoint(String),
}

/// Exit-code family of an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Validation,
    Io,
    Numerical,
}

impl Error {
    pub fn family(&self) -> ErrorFamily {
        match self {
            Error::Io { .. } | Error::Format(_) | Error::Checkpoint(_) => ErrorFamily::Io,
            Error::Numerical(_) => ErrorFamily::Numerical,
            _ => ErrorFamily::Validation,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            line,
            message: message.into(),
        }
    }
}
