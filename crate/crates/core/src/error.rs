use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("header mismatch: {0}")]
    HeaderMismatch(String),

    /// A data row could not be interpreted. `line` is 1-based and counts the header.
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty group: {0}")]
    EmptyGroup(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("problem too large for the exact solver: {rows}x{cols} exceeds {cap}")]
    SizeCap { rows: usize, cols: usize, cap: usize },

    /// A computation is undefined for the given input (single-class labels,
    /// zero denominators, no qualifying pairs, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Stable machine-readable identifier for the error class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
            Error::Schema(_) => "schema",
            Error::HeaderMismatch(_) => "header_mismatch",
            Error::Row { .. } => "bad_row",
            Error::Dimension(_) => "dimension",
            Error::EmptyGroup(_) => "empty_group",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::SizeCap { .. } => "size_cap",
            Error::Degenerate(_) => "degenerate",
            Error::Parse(_) => "parse",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
