use thiserror::Error;

/// Every failure the library can report. Variants map onto CLI exit codes
/// through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("boundary proximity: {0}")]
    BoundaryProximity(String),
    #[error("conditioning error: {0}")]
    Conditioning(String),
    #[error("integration error: {0}")]
    Integration(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("factorization error: {0}")]
    Factorization(String),
    #[error("non-convergence: {0}")]
    NonConvergence(String),
    #[error("maximum likelihood estimate on the boundary: {0}")]
    BoundaryMle(String),
    #[error("optimization error: {0}")]
    Optimization(String),
    #[error("posterior appears improper: {0}")]
    ImproperPosterior(String),
    #[error("unknown family `{0}`")]
    UnknownFamily(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownFamily(_) | Error::Config(_) | Error::Json(_) => 2,
            _ => 1,
        }
    }
}
