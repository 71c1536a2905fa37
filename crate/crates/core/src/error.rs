use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value in {what} at coordinate {index}")]
    NonFiniteValue { what: &'static str, index: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported optimizer kind `{0}`")]
    UnsupportedKind(String),

    #[error("invalid constant: {0}")]
    InvalidConstant(String),

    #[error("{name} = {value} is out of range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("rho = sqrt(beta2)/beta1 = {rho} violates rho < 1")]
    RhoConstraintViolated { rho: f64 },

    #[error("degenerate rate fit: {0}")]
    DegenerateFit(String),

    #[error("empty input")]
    EmptyInput,

    #[error("precondition not met: {0}")]
    PreconditionNotMet(String),

    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

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
