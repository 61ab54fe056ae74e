use std::path::PathBuf;

use thiserror::Error;

/// Every failure the toolkit can report.
///
/// Variants are grouped by how the command-line front end reports them:
/// configuration problems exit with 2, data problems with 3 and numeric
/// failures with 4 (see [`CgadError::exit_code`]).
#[derive(Debug, Error)]
pub enum CgadError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("parse error in {file} at row {row}, column {column}: {message}")]
    Parse {
        file: String,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid state: {0}")]
    State(String),
}

pub type Result<T> = std::result::Result<T, CgadError>;

impl CgadError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CgadError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(file: impl Into<String>, row: usize, column: usize, message: impl Into<String>) -> Self {
        CgadError::Parse {
            file: file.into(),
            row,
            column,
            message: message.into(),
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CgadError::Argument(_) | CgadError::Config(_) => 2,
            CgadError::Dimension(_)
            | CgadError::Parse { .. }
            | CgadError::Format(_)
            | CgadError::Io { .. } => 3,
            CgadError::Numeric(_) | CgadError::State(_) => 4,
        }
    }
}
