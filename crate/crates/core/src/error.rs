//! Unified error type. CLI exit codes hang off [`Error::exit_code`]:
//! input/validation problems exit 2, numerical failures exit 3.

use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Underlying I/O failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed record in a line-oriented input; `line` is 1-based.
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },

    /// Input violates a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Numerics broke down (singular system, non-finite statistic, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn parse(path: impl AsRef<Path>, line: u64, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.as_ref().to_path_buf(), line, msg: msg.into() }
    }

    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}
