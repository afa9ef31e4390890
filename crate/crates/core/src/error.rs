use thiserror::Error;

/// Errors raised by the smoothing kernels and their surrounding machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("missing capability: {0}")]
    Capability(String),
    #[error("diagnostics error: {0}")]
    Diagnostics(String),
    #[error("enumeration of {size} configurations exceeds the bound {bound}")]
    EnumerationTooLarge { size: u128, bound: u128 },
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
