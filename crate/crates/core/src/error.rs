use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    Parse(String),

    #[error("invalid instance: {}", .0.join("; "))]
    InvalidInstance(Vec<String>),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("subset of {size} sites exceeds the exact TSP limit of {limit}")]
    SubsetTooLarge { size: usize, limit: usize },

    #[error("LP solver failure: {0}")]
    Lp(String),

    #[error("no site can be reached within the route budget")]
    NoReachableSite,

    #[error("transport error: {0}")]
    Transport(String),

    #[error("remote service returned {status}: {body}")]
    Remote { status: u16, body: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
