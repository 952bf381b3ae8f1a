use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("interval-censored outcome needs L < R (got L={left}, R={right})")]
    InvalidInterval { left: f64, right: f64 },
    #[error("exact outcome needs L == R (got L={left}, R={right})")]
    InexactEvent { left: f64, right: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("cluster id {id} has no parameters (k = {k})")]
    DanglingCluster { id: usize, k: usize },
    #[error("covariance matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("design matrix is rank deficient (collinear columns)")]
    Collinear,
    #[error("scenario id {0} is not one of 1..=6")]
    UnknownScenario(u32),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("chains must have equal length")]
    UnequalChains,
    #[error("empty input: {0}")]
    Empty(&'static str),
}
