use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("state {state} outside battery range [0..{capacity}]")]
    StateOutOfRange { state: usize, capacity: usize },

    #[error("relay cannot transmit 1 in state {state} (needs at least {cost} units)")]
    InfeasibleTransmit { state: usize, cost: usize },

    #[error("invalid policy: {}", .0.join("; "))]
    InvalidPolicy(Vec<String>),

    #[error("battery chain has no unique steady state")]
    NoSteadyState,

    #[error("grid of {points} points exceeds the evaluation budget of {budget}; lower the resolution")]
    BudgetExceeded { points: f64, budget: f64 },

    #[error("invalid block plan: {0}")]
    InvalidPlan(String),

    #[error("message space of ~2^{bits:.1} exceeds the enumeration limit of {limit}")]
    EnumerationLimit { bits: f64, limit: u64 },

    #[error("message out of range: {0}")]
    MessageOutOfRange(String),

    #[error("codeword for state {state} exhausted after {length} symbols")]
    PaddingExhausted { state: usize, length: usize },

    #[error("sequence too short: need at least {needed} symbols, got {got}")]
    SequenceTooShort { needed: usize, got: usize },

    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
