use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("outside domain: {0}")]
    Domain(String),
    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },
    #[error("pathological truncation: acceptance rate {rate:.3e} after {attempts} draws")]
    PathologicalTruncation { rate: f64, attempts: u64 },
    #[error("propagation produced an invalid state: {0}")]
    Propagation(String),
    #[error("index convention mismatch: imaginary part {0:.3e} in compressibility")]
    ConventionMismatch(f64),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether this error came from bad user input rather than a numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidDimension(_) | Error::Shape(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
