use thiserror::Error;

/// Errors produced anywhere in the analytics, simulation and statistics layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("jump kernel is asymmetric: offset {offset:?} has no mirror of equal weight")]
    AsymmetricKernel { offset: Vec<i64> },

    #[error("jump kernel support does not generate Z^{dim} (lattice index {index})")]
    NotIrreducible { dim: usize, index: u128 },

    #[error("jump kernel contains the zero offset")]
    ZeroOffsetPresent,

    #[error("invalid jump kernel: {0}")]
    InvalidKernel(String),

    #[error("covariance matrix of the jump kernel is numerically singular")]
    SingularQ,

    #[error("{what}: tolerance {tol:e} not reached ({detail})")]
    ToleranceNotReached {
        what: &'static str,
        tol: f64,
        detail: String,
    },

    #[error("Green function diverges: the walk is recurrent in d = {dim}")]
    RecurrentCase { dim: usize },

    #[error("integral diverges in d = {dim}: {detail}")]
    DivergentIntegral { dim: usize, detail: &'static str },

    #[error("argument outside the domain: {0}")]
    DomainError(String),

    #[error("invalid branching rate: {0}")]
    InvalidRate(String),

    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),

    #[error("population explosion guard tripped at t = {time:.4}: {detail}")]
    RateOverflow { time: f64, detail: String },

    #[error("state-dependent branching from a Poisson start needs an E[sigma(xi_r(0))] curve")]
    MissingSigmaCurve,

    #[error("equilibrium moments need the equilibrium branching rate sigma_eq")]
    MissingSigmaEq,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("limit law is not defined for d = {0} (needs d >= 3)")]
    UnsupportedDimension(usize),

    #[error("Gram matrix is not positive semidefinite (jitter {jitter:e} exceeded cap {cap:e})")]
    NotPsd { jitter: f64, cap: f64 },

    #[error("too few replicates: {got} < {need}")]
    TooFewReplicates { got: usize, need: usize },

    #[error("degenerate sample: zero variance at grid point {point}")]
    TooFewEffective { point: usize },

    #[error("log-log fit needs strictly positive inputs")]
    NonpositiveInput,

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
