use thiserror::Error;

/// Errors produced by the numerical routines and the batch front-end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("direction has a vanishing symmetric part (Frobenius norm {0:e})")]
    ZeroDirection(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("channel output is degenerate: smallest covariance eigenvalue {0:e}")]
    DegenerateOutput(f64),

    #[error("alpha generator requires alpha outside {{0, 1}}, got {0}")]
    InvalidAlpha(f64),

    #[error("estimate is not finite: {0}")]
    NonFiniteEstimate(String),

    #[error("quadrature supports at most 3 dimensions, got {0}")]
    DimensionTooHigh(usize),

    #[error("objective diverged at iteration {iteration}; reduce the step size")]
    DivergingObjective { iteration: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at {location}: {message}")]
    Config { location: String, message: String },

    #[error("results file is missing column `{0}`")]
    MissingColumn(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Variant name, used in config diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite(_) => "NotPositiveDefinite",
            Error::ZeroDirection(_) => "ZeroDirection",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::DegenerateOutput(_) => "DegenerateOutput",
            Error::InvalidAlpha(_) => "InvalidAlpha",
            Error::NonFiniteEstimate(_) => "NonFiniteEstimate",
            Error::DimensionTooHigh(_) => "DimensionTooHigh",
            Error::DivergingObjective { .. } => "DivergingObjective",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Config { .. } => "ConfigError",
            Error::MissingColumn(_) => "MissingColumn",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }

    pub(crate) fn config(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            location: location.into(),
            message: message.into(),
        }
    }
}
