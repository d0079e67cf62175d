use thiserror::Error;

/// Errors raised by model validation, enumeration caps and numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("{what} not normalized: probabilities sum to {sum}")]
    NotNormalized { what: String, sum: f64 },

    #[error("negative probability {value} in {what}")]
    NegativeProbability { what: String, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{what} of size {size} exceeds cap {cap}")]
    CapExceeded {
        what: &'static str,
        size: u128,
        cap: u64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rate not strictly interior; bound undefined (delta = {0})")]
    NotInterior(f64),

    #[error("outside single-queue capacity: lambda1 = {lambda1} > mu1 = {mu1}")]
    OutsideCapacity { lambda1: f64, mu1: f64 },

    #[error("non-finite gradient at coordinate {0}")]
    NonFiniteGradient(usize),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("rate point outside region (margin {0})")]
    OutsideRegion(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
