use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("root is not bracketed: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoSignChange { f_lo: f64, f_hi: f64 },

    #[error("Cholesky factorization failed with jitter up to {max_jitter:e}")]
    CholeskyFailure { max_jitter: f64 },

    #[error("degenerate particle ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("degenerate samples: {0}")]
    DegenerateSamples(String),

    #[error("covariance matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("iterative solver did not converge: {0}")]
    NonConvergence(String),

    #[error("candidate selection exhausted after {attempts} attempts ({selected} of {requested} points selected)")]
    SelectionExhausted {
        attempts: usize,
        selected: usize,
        requested: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("all {0} hyperparameter optimizations failed")]
    OptimizationFailed(usize),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
