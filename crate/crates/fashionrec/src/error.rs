use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] fashionrec_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: entry {entry}: {message}")]
    Parse {
        path: PathBuf,
        entry: usize,
        message: String,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("numeric check failed: {0}")]
    Numeric(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn json(path: impl AsRef<Path>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// 1 for bad input (validation, format, usage), 2 for numeric or internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(e) if e.is_numeric() => 2,
            Error::Numeric(_) | Error::Internal(_) => 2,
            _ => 1,
        }
    }
}
