use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("singular structure: zero diagonal at row {0}")]
    ZeroDiagonal(usize),

    #[error("singular matrix: zero pivot at row {0}")]
    SingularMatrix(usize),

    #[error("linear solve did not converge: {0}")]
    LinearSolve(String),

    #[error("nonlinear stage solve failed: {0}")]
    StageFailure(String),

    #[error("time step collapsed below {floor:e} at t = {t}")]
    StepCollapse { t: f64, floor: f64 },

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
