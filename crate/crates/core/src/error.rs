use thiserror::Error;

/// Errors raised by the library.
///
/// Findings (assumption failures, bound violations) are returned as data,
/// never through this type.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("function `{name}` expects {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid simplex point: {0}")]
    Simplex(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("unknown built-in model `{0}`")]
    UnknownModel(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("population mismatch: expected {expected}, got {got}")]
    Population { expected: usize, got: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("state space too large: {states} states exceeds cap {cap}")]
    StateSpaceCap { states: usize, cap: usize },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
