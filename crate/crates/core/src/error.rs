use thiserror::Error;

/// Failures surfaced by the library. Numerical failures are never silent.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("empty vector: dimension must be positive")]
    EmptyVector,

    #[error("missing constant {0}")]
    MissingConstant(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("iterate diverged at k = {k}")]
    Diverged { k: usize },

    #[error("problem `{0}` is not a finite sum; minibatch oracle unavailable")]
    NotFiniteSum(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
