use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated a precondition (shape, width, empty input, bad config).
    #[error("usage error: {0}")]
    Usage(String),
    /// Mathematically undefined request, e.g. inverting zero.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("training failed at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },
    /// Artifacts on disk do not belong together.
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! usage {
    ($($arg:tt)*) => {
        $crate::error::Error::Usage(format!($($arg)*))
    };
}
pub(crate) use usage;
