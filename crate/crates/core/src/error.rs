use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("horizontal gradient vanishes; the normalized p-Laplacian is undefined")]
    DegenerateGradient,

    #[error("sampling infeasible: acceptance ratio {ratio:e} after {proposals} proposals")]
    Feasibility { ratio: f64, proposals: u64 },

    #[error("ball of radius {eps} is under-resolved by grid spacing {h}")]
    UnderResolved { eps: f64, h: f64 },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
