use thiserror::Error;

/// Errors raised by the library. Verification failures are never errors;
/// they are reported through the check reports in [`crate::operators`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("minimum-image violation: {what} has cutoff {r_cut} > L/2 = {half_box}")]
    MinimumImage {
        what: String,
        r_cut: f64,
        half_box: f64,
    },
    #[error("invalid truncation: cap N = {cap} exceeds the number of sites M = {sites}")]
    InvalidTruncation { cap: usize, sites: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("negative time t = {0}")]
    NegativeTime(f64),
    #[error("time t = {t} is outside the guaranteed interval [0, {limit})")]
    OutsideExistenceInterval { t: f64, limit: f64 },
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("invalid bins: {0}")]
    InvalidBins(String),
    #[error("closure singularity: density u = {0:e} is too small for the Kirkwood closure")]
    ClosureSingularity(f64),
    #[error("numerical divergence at t = {t}: |value| = {value:e}")]
    Divergence { t: f64, value: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
