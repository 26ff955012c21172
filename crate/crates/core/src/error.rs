use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid system parameters: {0}")]
    InvalidParams(String),

    #[error("derivative at x = 1/2 needs an explicit branch")]
    AmbiguousBranch,

    #[error("derivative order {0} not supported (expected 1, 2 or 3)")]
    DerivativeOrder(u8),

    #[error("Schwarzian derivative is singular at x = {0}")]
    Singular(f64),

    #[error("word of length {len} is too short, need at least {need}")]
    WordTooShort { len: usize, need: usize },

    #[error("exact enumeration refused for n = {n} (limit {limit}); use the Monte Carlo estimator")]
    EnumerationLimit { n: usize, limit: usize },

    #[error("{what} exceeded cap {cap}")]
    CapExceeded { what: &'static str, cap: usize },

    #[error("only {got} usable points in the fit window, need at least {need}")]
    InsufficientPoints { got: usize, need: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("observable {0} is not Hölder and cannot be used as psi without the override flag")]
    ObservableRejected(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
