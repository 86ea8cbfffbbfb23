use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("direction must be nonzero")]
    ZeroDirection,

    #[error("shape is not symmetric positive semidefinite")]
    NotSymmetricPsd,

    #[error("balls not strictly separated (r1 + r2 = {radii} >= distance {distance})")]
    BallsNotSeparated { radii: f64, distance: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short kebab-case tag for machine consumption (CLI error lines).
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "dimension-mismatch",
            Error::NonFinite(_) => "non-finite",
            Error::ZeroDirection => "zero-direction",
            Error::NotSymmetricPsd => "not-symmetric-psd",
            Error::BallsNotSeparated { .. } => "balls-not-separated",
            Error::HypothesisViolated(_) => "theorem-hypothesis-violated",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::Parse { .. } => "parse-error",
            Error::Io(_) => "io-error",
            Error::Json(_) => "json-error",
            Error::Csv(_) => "csv-error",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
