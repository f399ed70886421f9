use thiserror::Error;

/// Errors raised by planners, learners, environments and the file loaders.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid probability row: {0}")]
    InvalidPolicy(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("policy is not proper: termination is unreachable from state {state}")]
    ImproperPolicy { state: usize },

    #[error("no convergence within {iterations} iterations (last sup-norm change {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("inner fixed point failed at beta={beta}: {source}")]
    AnnealFailure {
        beta: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("singular linear system while evaluating a policy")]
    Singular,

    #[error("environment error: {0}")]
    Env(String),

    #[error("common-random-number violation: next states {0} and {1} differ")]
    CrnMismatch(usize, usize),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

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

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
