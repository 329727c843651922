use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("{what} exceeds cap: {size} > {cap}")]
    CapExceeded {
        what: &'static str,
        size: u128,
        cap: u128,
    },
    #[error("invalid relation: {0}")]
    InvalidRelation(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("arity error: {0}")]
    Arity(String),
    #[error("search budget exhausted: {0}")]
    BudgetExhausted(String),
    #[error("gadget mismatch: {0}")]
    GadgetMismatch(String),
    #[error("invalid interpretation: {0}")]
    Interpretation(String),
    #[error("transport precondition violated: {0}")]
    Transport(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("invalid value: {0}")]
    Value(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("invalid group: {0}")]
    Group(String),
}

impl Error {
    pub(crate) fn cap(what: &'static str, size: u128, cap: u128) -> Self {
        Error::CapExceeded { what, size, cap }
    }

    pub fn is_cap_exceeded(&self) -> bool {
        matches!(self, Error::CapExceeded { .. })
    }
}

pub type Result<T> = core::result::Result<T, Error>;
