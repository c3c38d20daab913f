use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("truncation too small: {0}")]
    TruncationTooSmall(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("contour passes too close to a zero of the determinant; reduce the radius")]
    ContourHitsZero,
    #[error("the window bound only applies to cumulant order k >= 2, got {0}")]
    WindowOrder(usize),
    #[error("layer times must be strictly increasing")]
    NonIncreasingTimes,
    #[error("symbols must sum to zero (largest residual coefficient {0:e})")]
    NonZeroSymbolSum(f64),
    #[error("enumeration over {0} configurations exceeds the limit")]
    EnumerationTooLarge(u128),
    #[error("kernel is not a rank-{expected} projection: {detail}")]
    NotAProjection { expected: usize, detail: String },
    #[error("refinement did not converge: {0}")]
    NotConverged(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, Error>;
