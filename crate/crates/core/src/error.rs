use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not self-adjoint (max asymmetry {0:e})")]
    NotSelfAdjoint(f64),
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("eigensolver failed to converge for eigenvalue {index} after {iterations} iterations")]
    NonConvergence { index: usize, iterations: usize },
    #[error("singular matrix encountered at pivot {0}")]
    Singular(usize),
    #[error("spectral parameter {0} must have nonzero imaginary part")]
    OnRealAxis(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("k = {0} exceeds the supported maximum of {1}")]
    TooLarge(usize, usize),
    #[error("not a non-crossing partition: {0}")]
    NotNonCrossing(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
