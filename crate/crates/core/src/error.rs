use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sampling grid: {0}")]
    InvalidGrid(String),
    #[error("invalid folding parameter: lambda must be positive, got {0}")]
    InvalidFolding(f64),
    #[error("SNR is undefined for an all-zero signal")]
    UndefinedSnr,
    #[error("NMSE is undefined for an all-zero ground truth")]
    UndefinedNmse,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("degenerate band: {0}")]
    DegenerateBand(String),
    #[error("invalid band: {0}")]
    InvalidBand(String),
    #[error("invalid two-band configuration: {0}")]
    InvalidTwoBand(String),
    #[error("operator has no rows (empty out-of-band set)")]
    EmptyOperator,
    #[error("sampling rate too low: {0}")]
    RateTooLow(String),
    #[error("difference order {order} exceeds cap {cap}")]
    OrderOverflow { order: usize, cap: usize },
    #[error("invalid threshold {0}: must be non-negative")]
    InvalidThreshold(f64),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("corrupt checkpoint {path}: {reason}")]
    CorruptCheckpoint { path: PathBuf, reason: String },
    #[error("corrupt dataset {path}: {reason}")]
    CorruptDataset { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
