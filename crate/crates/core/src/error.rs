use thiserror::Error;

/// Errors raised anywhere in the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max |A - A^H| entry = {deviation:e})")]
    NonHermitianInput { deviation: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("outcome {index} selected with negligible probability {probability:e}")]
    DegenerateDistribution { index: usize, probability: f64 },

    #[error("table requires {required} entries but the budget is {budget}")]
    BudgetExceeded { required: u128, budget: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("time {t} lies outside [0, {duration}]")]
    OutOfDomain { t: f64, duration: f64 },

    #[error("quadrature requires {required} kernel evaluations but the budget is {budget}")]
    QuadratureBudget { required: usize, budget: usize },

    #[error("coherence ratio {0} is not in (0, 1]")]
    InvalidRatio(f64),

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }

    /// Process exit code: 2 for I/O and format problems, 1 for domain errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Format { .. } | Error::Io(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
