//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Covariance factorization failed even after jitter escalation.
    #[error("Cholesky factorization failed after jitter {max_jitter:.3e} (diagonal spread ~{condition_estimate:.3e})")]
    CholeskyFailed {
        max_jitter: f64,
        condition_estimate: f64,
    },

    /// A fit was requested on an empty training set.
    #[error("at least one training point is required")]
    EmptyTrainingSet,

    /// Weighted least squares stayed rank-deficient despite the ridge term.
    #[error("policy design matrix is rank deficient despite ridge regularization")]
    RankDeficient,

    /// An input left its declared box.
    #[error("{name} = {value} outside [{lower}, {upper}]")]
    OutOfBounds {
        name: &'static str,
        value: f64,
        lower: f64,
        upper: f64,
    },

    /// Not enough data for the requested operation.
    #[error("need at least {required} records, got {actual}")]
    TooFewRecords { required: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
