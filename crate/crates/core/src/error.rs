use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("infeasible inertia: {0}")]
    InfeasibleInertia(String),

    #[error("non-finite state: {0}")]
    NonFiniteState(String),

    #[error("invalid configuration at `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("failed to parse scenario: {0}")]
    Parse(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
