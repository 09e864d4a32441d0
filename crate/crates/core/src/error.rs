use thiserror::Error;

/// Errors raised by the pricing library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("volume discount {gamma} must exceed 1 - alpha = {bound} (alpha = {alpha})")]
    DiscountTooDeep { gamma: f64, alpha: f64, bound: f64 },

    #[error("per-job cost must be strictly positive, got {0}")]
    NonPositiveCost(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("user type `{0}` receives zero net utility")]
    ZeroUtility(String),

    #[error("demand root: {0}")]
    Root(String),

    #[error("no feasible point on the price grid")]
    EmptyGrid,

    #[error("trace line {line}: {reason}")]
    Trace { line: u64, reason: String },

    #[error("clustering: {0}")]
    Clustering(String),

    #[error("schedule: {0}")]
    Schedule(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field: field.into(),
        reason: reason.into(),
    }
}
