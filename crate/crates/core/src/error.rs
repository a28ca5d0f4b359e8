use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A coupling matrix (or any matrix that must be positive definite) has
    /// its smallest eigenvalue at or below the conditioning floor.
    #[error("ill-conditioned coupling matrix: smallest eigenvalue {min_eigenvalue:e}")]
    IllConditionedCoupling { min_eigenvalue: f64 },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::ContractViolation(msg.into())
    }
}
