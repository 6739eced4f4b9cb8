use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("invalid observable: {0}")]
    InvalidObservable(String),
    #[error("element set is not extremal: Gram rank {rank} < {expected}")]
    NotExtremal { rank: usize, expected: usize },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn size(msg: impl Into<String>) -> Error {
    Error::Size(msg.into())
}
