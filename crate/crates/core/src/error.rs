use std::path::PathBuf;

use thiserror::Error;

use crate::evm::NyquistVerdict;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in record {record}: {message}")]
    Parse { record: usize, message: String },

    #[error("schema error in record {record}: {message}")]
    Schema { record: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("shape error on axis {axis}: expected {expected}, got {actual}")]
    Shape {
        axis: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("state error: {0}")]
    State(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing label: {0}")]
    MissingLabel(String),

    #[error("sampling rate too low: {0}")]
    Nyquist(NyquistVerdict),

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(axis: &'static str, expected: usize, actual: usize) -> Self {
        Error::Shape {
            axis,
            expected,
            actual,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Schema { .. } => "schema",
            Error::Data(_) => "data",
            Error::Shape { .. } => "shape",
            Error::State(_) => "state",
            Error::Argument(_) => "argument",
            Error::Config(_) => "config",
            Error::MissingLabel(_) => "missing_label",
            Error::Nyquist(_) => "nyquist",
            Error::Format { .. } => "format",
            Error::Io(_) => "io",
        }
    }
}
