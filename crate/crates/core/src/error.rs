use std::path::PathBuf;

use firecast_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),

    #[error("line {line}: {detail}")]
    Parse { line: u64, detail: String },

    #[error("line {line}: invalid {field}: {detail}")]
    Validation {
        line: u64,
        field: &'static str,
        detail: String,
    },

    #[error("weather coverage: {0}")]
    Coverage(String),

    #[error("encoding: {0}")]
    Encoding(String),

    #[error("dimension: {0}")]
    Dimension(String),

    #[error("missing images for ids {0:?}")]
    Join(Vec<String>),

    #[error("sampling: {0}")]
    Sampling(String),

    #[error("schema: expected feature width {expected}, got {got}")]
    Schema { expected: usize, got: usize },

    #[error("metrics: {0}")]
    Metrics(String),

    #[error("domain: {0}")]
    Domain(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("checkpoint integrity: {0}")]
    Integrity(String),

    #[error("checkpoint manifest: {0}")]
    Manifest(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: String, expected: u32 },

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Divergence { .. } => 4,
            Error::Tensor(TensorError::NonFinite { .. }) => 4,
            Error::Integrity(_) | Error::Manifest(_) | Error::Version { .. } => 5,
            _ => 3,
        }
    }
}
