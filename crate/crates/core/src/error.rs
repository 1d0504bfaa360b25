use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid rotating frame: {0}")]
    InvalidFrame(String),

    #[error("steady state is not unique (null space dimension {0})")]
    NonUniqueSteadyState(usize),

    #[error("density matrix invariant violated: {0}")]
    InvalidState(String),

    #[error("non-uniform sampling: {0}")]
    NonUniformSampling(String),

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("fit initialization failed: {0}")]
    FitInit(String),

    #[error("compile error: {0}")]
    Compile(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
