//! Crate-wide error type.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("infeasible parameters: {0}")]
    InfeasibleParams(String),

    #[error("transition graph is not irreducible")]
    NotIrreducible,

    #[error("constraint is not mixing (period {period})")]
    NotMixing { period: usize },

    #[error("chain is not periodic")]
    NotPeriodic,

    #[error("matrix is not row-stochastic: {0}")]
    NonStochastic(String),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("invalid channel kernel: {0}")]
    InvalidKernel(String),

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    #[error("zero likelihood at step {step} (conditional {value:e})")]
    ZeroLikelihood { step: usize, value: f64 },

    #[error("sample length {n} too short for blocking (p={p}, q={q}, k={k})")]
    TooShort { n: usize, p: usize, q: usize, k: usize },

    #[error("enumeration too large: {terms} terms exceeds limit {limit}")]
    TooLarge { terms: f64, limit: f64 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("insufficient trace: {got} records, need {need}")]
    InsufficientTrace { got: usize, need: usize },

    #[error("non-finite gradient at iteration {n}")]
    NonFiniteGradient { n: u64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("io error: {0}")]
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
