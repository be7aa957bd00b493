use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite gradient at step {t} (sample {sample})")]
    NonFinite { t: usize, sample: usize },

    #[error("sample stream exhausted after {drawn} draws (needed {needed})")]
    StreamExhausted { drawn: usize, needed: usize },

    #[error("sub-solver failed to converge (residual {residual:e})")]
    Solver { residual: f64 },

    #[error("invalid proposal: Q[{i}][{j}] > 0 but Q[{j}][{i}] = 0")]
    InvalidProposal { i: usize, j: usize },

    #[error("invalid distribution: entry {index} is {value}")]
    InvalidDistribution { index: usize, value: f64 },

    #[error("target second eigenvalue {target} unreachable; reachable range [{low}, {high})")]
    TargetUnreachable { target: f64, low: f64, high: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("chain is not ergodic (second eigenvalue modulus {modulus})")]
    NotErgodic { modulus: f64 },

    #[error("mixing too slow: distance {distance:e} still above {eta:e} at lag cap {cap}")]
    MixingTooSlow { cap: usize, eta: f64, distance: f64, partial: Vec<f64> },

    #[error("assumption violated: matrix {matrix} is singular (condition number {condition:e})")]
    Singular { matrix: &'static str, condition: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
