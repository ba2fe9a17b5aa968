use std::path::PathBuf;

use tavp_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("config field `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error("{path}: {msg}")]
    Data { path: PathBuf, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { field: field.into(), msg: msg.into() }
    }

    pub fn data(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Data { path: path.into(), msg: msg.into() }
    }

    /// True when the failure is a non-finite value produced by a forward op.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Tensor(TensorError::NonFinite { .. }))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
