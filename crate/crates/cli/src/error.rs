use std::path::PathBuf;

use gpa_core::GpaError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {msg}")]
    Data { path: String, msg: String },

    #[error(transparent)]
    Core(#[from] GpaError),
}

impl CliError {
    /// 1 for failures during computation, 2 for bad usage or unreadable
    /// and malformed files.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(
                GpaError::Io(_) | GpaError::Json(_) | GpaError::Format(_) | GpaError::UnsupportedVersion { .. },
            ) => 2,
            CliError::Core(_) => 1,
            _ => 2,
        }
    }
}
