use thiserror::Error;

/// Errors raised across the estimation and training pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot normalize a zero vector")]
    ZeroNorm,

    #[error(
        "empty support: slice [{lo}, {hi}) of {n} candidates is empty; relax the ring thresholds or grow the store"
    )]
    EmptySupport { lo: usize, hi: usize, n: usize },

    #[error("no negatives available: {0}")]
    NoNegatives(String),

    #[error("index {index} out of range for store of size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable snake_case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Empty(_) => "empty",
            Error::NonFinite(_) => "non_finite",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotPositiveDefinite(_) => "not_positive_definite",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::ZeroNorm => "zero_norm",
            Error::EmptySupport { .. } => "empty_support",
            Error::NoNegatives(_) => "no_negatives",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::Diverged { .. } => "diverged",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
