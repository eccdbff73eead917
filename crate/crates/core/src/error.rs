use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation (non-finite input,
    /// nonpositive argument of a logarithm, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Iterative or floating-point failure. `iteration` is set when the failure
    /// happened inside a solver loop.
    #[error("numerical error{}: {message}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Numerical {
        message: String,
        iteration: Option<usize>,
    },

    /// Invalid parameters or an inconsistent problem setup.
    #[error("configuration error: {0}")]
    Config(String),

    /// Vector or grid shapes that do not fit together.
    #[error("dimension mismatch ({context}): expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// The data violate a modeling assumption, e.g. marginals of unequal mass.
    #[error("model error: {0}")]
    Model(String),

    /// Requested problem size or feature is not supported by this routine.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input file.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical {
            message: message.into(),
            iteration: None,
        }
    }

    pub(crate) fn at_iteration(self, it: usize) -> Self {
        match self {
            Error::Numerical { message, .. } => Error::Numerical {
                message,
                iteration: Some(it),
            },
            other => other,
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            context,
            expected,
            got,
        });
    }
    Ok(())
}
