use thiserror::Error;

/// Errors raised by constructors and decision procedures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("element lies outside the system: {0}")]
    NotInSystem(String),
    #[error("margin unit of block {block} is not strictly positive (min eigenvalue {min_eig:e})")]
    MarginNotPositive { block: usize, min_eig: f64 },
    #[error("state is not faithful")]
    NotFaithful,
    #[error("kernel is not a null-subspace")]
    InvalidKernel,
    #[error("input map {index} is not completely positive")]
    NotCompletelyPositive { index: usize },
    #[error("input maps violate the prescribed identity: {0}")]
    IdentityViolated(String),
    #[error("block {0} is not diagonal; exact path unavailable")]
    NotDiagonal(usize),
    #[error("verdict carries neither witness nor certificate")]
    NothingToReplay,
}

pub type Result<T> = std::result::Result<T, Error>;
