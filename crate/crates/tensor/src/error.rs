use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid configuration for {op}: {detail}")]
    Config { op: &'static str, detail: String },

    #[error("{op} needs at least {needed} samples in train mode, got {got}")]
    BatchSize {
        op: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("invalid one-hot row {row}: {detail}")]
    Encoding { row: usize, detail: String },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("backward already ran on this tape; reset it first")]
    AlreadyBackpropagated,

    #[error("variable does not belong to this tape")]
    Detached,

    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

pub(crate) fn shape_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(TensorError::Shape {
        op,
        detail: detail.into(),
    })
}
