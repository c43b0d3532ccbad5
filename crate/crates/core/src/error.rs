//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Raised by the compact SVD when the smallest singular value falls below
    /// the rank tolerance. Bayesianization assumes B has full column rank r.
    #[error(
        "rank-deficient matrix: smallest singular value {smallest:e} <= tolerance {tolerance:e} \
         (B is assumed to have full column rank r)"
    )]
    RankDeficient { smallest: f64, tolerance: f64 },

    #[error("result of size {rows}x{cols} exceeds the oracle size cap {cap}x{cap}")]
    SizeCap {
        rows: usize,
        cols: usize,
        cap: usize,
    },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("non-finite value produced: {0}")]
    NonFinite(String),

    #[error("value outside the domain: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("training diverged at step {step} (loss = {loss})")]
    Diverged { step: usize, loss: f64 },

    #[error("dataset has no labels")]
    MissingLabels,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
