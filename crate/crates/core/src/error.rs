use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("invalid {name}: {reason}")]
    Domain { name: &'static str, reason: String },

    #[error("length mismatch for {name}: expected {expected}, got {actual}")]
    LengthMismatch {
        name: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("integral diverges: {0}")]
    Divergent(String),

    #[error("Markov chain is reducible: no unique stationary distribution")]
    ReducibleChain,

    #[error("stationary distribution did not converge within {0} iterations")]
    NotConverged(usize),

    #[error("brute-force oracle refused: {slots} slots exceeds the limit of {limit}")]
    OracleTooLarge { slots: usize, limit: usize },

    #[error("value tables cover horizon {available}, slot {slot} needs horizon {needed}")]
    HorizonMismatch { available: usize, slot: usize, needed: usize },

    #[error("malformed value-table cache: {0}")]
    Cache(String),
}

impl Error {
    pub(crate) fn domain(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            name,
            reason: reason.into(),
        }
    }
}
