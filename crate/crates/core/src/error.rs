use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spin system: {0}")]
    InvalidSystem(String),

    #[error("expected {expected} labels, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("spin index {spin} out of range for a {n}-spin system")]
    SpinOutOfRange { spin: usize, n: usize },

    #[error("operator dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("generator is not Hermitian (max deviation {0:e})")]
    NonHermitian(f64),

    #[error("{0} has zero norm")]
    ZeroNorm(&'static str),

    #[error("negative evolution time {0}")]
    NegativeTime(f64),

    #[error("invalid pulse: {0}")]
    InvalidPulse(String),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no feasible solution for parameter in [{lower}, {upper}]: {reason}")]
    NoFeasibleSolution {
        lower: f64,
        upper: f64,
        reason: String,
    },

    #[error("search failed: {0}")]
    SearchFailed(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
