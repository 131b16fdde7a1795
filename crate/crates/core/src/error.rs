use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {context}{}", layer.map(|l| format!(" (layer {l})")).unwrap_or_default())]
    NonFinite {
        context: String,
        layer: Option<usize>,
    },

    #[error("invalid usage: {0}")]
    Usage(String),

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("unsupported checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn non_finite(context: impl Into<String>, layer: Option<usize>) -> Self {
        Error::NonFinite {
            context: context.into(),
            layer,
        }
    }
}
