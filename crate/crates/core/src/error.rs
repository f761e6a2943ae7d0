use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid drift: {0}")]
    InvalidDrift(String),
    #[error("inadmissible drift: {0}")]
    InadmissibleDrift(String),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("extinction not reached within horizon")]
    ExtinctionNotReached,
    #[error("Hoelder bound violated: |F({z}, {u})| / sqrt({u}) = {ratio} > C_M = {bound}")]
    HolderViolation {
        z: f64,
        u: f64,
        ratio: f64,
        bound: f64,
    },
    #[error("empty sample")]
    EmptySample,
}

pub type Result<T> = std::result::Result<T, Error>;
