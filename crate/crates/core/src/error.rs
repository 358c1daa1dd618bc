use thiserror::Error;

/// Errors produced by the measurement model, objective, solvers and theory checks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("degenerate ensemble: mean raw intensity is zero")]
    DegenerateEnsemble,

    #[error("degenerate intensity at measurement {index}")]
    DegenerateIntensity { index: usize },

    #[error("singular evaluation at measurement {index}: log argument {value} is not positive")]
    SingularEvaluation { index: usize, value: f64 },

    #[error("index {index} out of range for {len} measurements")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("rho = {rho} is outside the admissible range (0, {max}]")]
    OutOfTheoryRange { rho: f64, max: f64 },

    #[error("direction is parallel to the signal (h = \u{b1}x)")]
    ExcludedDirection,

    #[error("no success threshold is known for eta = {eta}; pass one explicitly")]
    ThresholdRequired { eta: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
