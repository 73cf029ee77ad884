use alloc::string::String;

/// Errors raised by the core routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("infeasible design: {0}")]
    InfeasibleDesign(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("infeasible target: {0}")]
    Infeasible(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidSpec(msg.into())
}
