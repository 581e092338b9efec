use thiserror::Error;

use crate::perturb::QueryLog;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("scale cap exceeded: {0}")]
    ScaleCap(String),

    /// The learner could not reach zero robust loss on the sample.
    #[error("sample is not robustly realizable ({reason}) after {queries} queries")]
    NonRealizable { reason: String, queries: usize, transcript: Box<QueryLog> },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("boosting failed: {0}")]
    BoostFailure(String),

    #[error("sparsification failed after {attempts} draws")]
    SparsifyFailure { attempts: usize },

    #[error("confidence boosting failed in round {round}: {msg}")]
    ConfidenceBoostFailure { round: usize, msg: String },

    #[error("game did not terminate within {cap} queries")]
    NonTerminating { cap: usize },

    #[error("survivor learner exceeded its round cap of {cap}")]
    SurvivorFailure { cap: usize },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
