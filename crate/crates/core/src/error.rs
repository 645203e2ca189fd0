use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller broke an operation's precondition (wrong dimension, non-Hermitian input, ...).
    #[error("contract violation in {module}: {message}")]
    Contract { module: &'static str, message: String },

    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error in {module}: {message}")]
    Domain { module: &'static str, message: String },

    /// A numerical invariant broke during integration.
    #[error("numerical fault in {module}: {message}")]
    Numerical { module: &'static str, message: String },

    #[error("trajectory with seed {seed:#018x} failed: {source}")]
    Trajectory { seed: u64, source: Box<Error> },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn contract(module: &'static str, message: impl Into<String>) -> Self {
        Error::Contract { module, message: message.into() }
    }

    pub(crate) fn domain(module: &'static str, message: impl Into<String>) -> Self {
        Error::Domain { module, message: message.into() }
    }

    pub(crate) fn numerical(module: &'static str, message: impl Into<String>) -> Self {
        Error::Numerical { module, message: message.into() }
    }

    /// Name of the module that raised the error, if it carries one.
    pub fn module(&self) -> Option<&'static str> {
        match self {
            Error::Contract { module, .. }
            | Error::Domain { module, .. }
            | Error::Numerical { module, .. } => Some(module),
            Error::Trajectory { source, .. } => source.module(),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
