use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-wide error. Each variant carries a short machine-readable kind via [`Error::kind`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("unsupported codec: {0}")]
    UnsupportedCodec(String),
    #[error("signal too short: {got} samples, need at least {need}")]
    TooShort { got: usize, need: usize },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: usize, loss: f64 },
    #[error("split error: {0}")]
    Split(String),
    #[error("construction error: {0}")]
    Construction(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("method mismatch: {0}")]
    MethodMismatch(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::UnsupportedCodec(_) => "unsupported_codec",
            Error::TooShort { .. } => "too_short",
            Error::Dimension(_) => "dimension",
            Error::Index(_) => "index",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Divergence { .. } => "divergence",
            Error::Split(_) => "split",
            Error::Construction(_) => "construction",
            Error::Validation(_) => "validation",
            Error::MethodMismatch(_) => "method_mismatch",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
