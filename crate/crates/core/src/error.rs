use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("gradient tape does not belong to this network")]
    TapeMismatch,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("invalid usage: {0}")]
    Usage(String),

    #[error("unsupported environment for this operation: {0}")]
    UnsupportedEnvironment(String),
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            got,
        })
    }
}
