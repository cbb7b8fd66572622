use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("capacity exceeded: {what} reached {count} (cap {cap})")]
    Capacity {
        what: &'static str,
        count: usize,
        cap: usize,
    },

    #[error("internal inconsistency: {0}")]
    Numerical(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
