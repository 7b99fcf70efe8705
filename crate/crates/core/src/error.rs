use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} outside domain [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("unsupported activation on unit `{unit}`: {name} is not piecewise linear")]
    UnsupportedActivation { unit: String, name: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid network: {}", .0.join("; "))]
    InvalidNetwork(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}
