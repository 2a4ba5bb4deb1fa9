use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{what} is not stochastic: deviation {deviation:e} exceeds tolerance")]
    NotStochastic { what: String, deviation: f64 },
    #[error("pairwise symmetry violated at signals ({a}, {b}): residual {residual:e}")]
    AsymmetricPrior { a: usize, b: usize, residual: f64 },
    #[error("invalid signal space: {0}")]
    InvalidSignalSpace(String),
    #[error("signal {signal} has zero marginal probability")]
    ZeroMarginal { signal: usize },
    #[error("logarithm of zero probability at signal {signal}")]
    LogDomain { signal: usize },
    #[error("divergence unbounded at index {index}")]
    UnboundedDivergence { index: usize },
    #[error("rejection budget of {budget} draws exhausted")]
    RejectionBudget { budget: usize },
    #[error("invalid matching: {0}")]
    InvalidMatching(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("iteration cap {cap} reached with residual {residual:e}")]
    IterationCap { cap: usize, residual: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("singular linear system")]
    Singular,
}

pub type Result<T> = std::result::Result<T, Error>;
