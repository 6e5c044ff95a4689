use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("translated windows do not overlap; edge correction is infinite")]
    InfiniteCorrection,

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("degenerate point cloud: {0}")]
    DegenerateCloud(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("nonpositive density {value} at sample on fiber {fiber_id}")]
    NonpositiveDensity { fiber_id: u64, value: f64 },

    #[error("division domain: {0}")]
    DivisionDomain(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("covariance matrix is ill-conditioned (factorization failed with jitter {jitter:e})")]
    IllConditioned { jitter: f64 },

    #[error("schema error in field `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
