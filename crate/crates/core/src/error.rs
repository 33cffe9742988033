use alloc::string::String;

/// Errors produced by the skill-learning and execution pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("stiffness matrix is not invertible (min eigenvalue {0:e})")]
    SingularStiffness(f64),

    #[error("unknown component id {0}")]
    UnknownComponent(usize),

    #[error("scene is missing frame `{0}`")]
    MissingFrame(String),

    #[error("no feasible component sequence for horizon {0}")]
    Infeasible(usize),

    #[error("episode aborted: {0}")]
    Aborted(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn degenerate(msg: impl Into<String>) -> Error {
    Error::Degenerate(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
