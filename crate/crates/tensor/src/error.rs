use thiserror::Error;

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: dimension error: {msg}")]
    Shape { op: &'static str, msg: String },

    #[error("{op}: index out of range: {msg}")]
    Bounds { op: &'static str, msg: String },

    #[error("{op}: produced a non-finite value (NaN or Inf)")]
    NonFinite { op: &'static str },

    #[error("backward already ran on this graph; rebuild the forward pass first")]
    BackwardTwice,

    #[error("backward root must be a tracked scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("operands belong to different graphs")]
    GraphMismatch,

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, msg: impl Into<String>) -> Self {
        TensorError::Shape { op, msg: msg.into() }
    }

    pub(crate) fn bounds(op: &'static str, msg: impl Into<String>) -> Self {
        TensorError::Bounds { op, msg: msg.into() }
    }
}
