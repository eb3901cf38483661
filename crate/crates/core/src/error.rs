use thiserror::Error;

/// Errors raised while building economies or running the analysis pipelines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid bundle: {0}")]
    InvalidBundle(String),

    #[error("invalid lottery: {0}")]
    InvalidLottery(String),

    #[error("invalid preference order: {0}")]
    InvalidOrder(String),

    #[error("invalid identity type for `{id}`: {reason}")]
    InvalidType { id: String, reason: String },

    #[error("endowments infeasible on good {good}: expected total {total}, capacity {capacity}")]
    EndowmentInfeasible { good: usize, total: f64, capacity: f64 },

    #[error("invalid economy: {0}")]
    InvalidEconomy(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unknown identity `{0}`")]
    UnknownIdentity(String),

    #[error("unknown principal `{0}`")]
    UnknownPrincipal(String),

    #[error("invalid attack: {0}")]
    InvalidAttack(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid price vector: {0}")]
    InvalidPrice(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
