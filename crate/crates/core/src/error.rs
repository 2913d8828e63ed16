use thiserror::Error;

/// Errors raised by model construction and the sampler.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A distribution or model parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// Two pieces of sampler state disagree with each other.
    #[error("inconsistent state: {0}")]
    Consistency(String),
    /// A sampler invariant that should be impossible to break was broken.
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! param_err {
    ($($arg:tt)*) => { $crate::error::Error::Parameter(format!($($arg)*)) };
}
macro_rules! consistency_err {
    ($($arg:tt)*) => { $crate::error::Error::Consistency(format!($($arg)*)) };
}
pub(crate) use consistency_err;
pub(crate) use param_err;
