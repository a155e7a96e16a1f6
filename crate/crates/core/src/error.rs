use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Divergence, event chattering or a failed energy balance.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Invalid component or run configuration.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Domain(msg()))
    }
}
