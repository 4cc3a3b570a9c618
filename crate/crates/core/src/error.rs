use thiserror::Error;

use crate::neuro::train::MetricHistory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("could not place {requested} objects without overlap after {attempts} attempts")]
    PlacementFailed { requested: usize, attempts: usize },

    #[error("unknown object id {0}")]
    UnknownObject(u32),

    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),

    #[error("need at least {required} frames, got {got}")]
    NotEnoughFrames { required: usize, got: usize },

    #[error("mask is empty")]
    EmptyMask,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("non-finite gradient in parameter `{name}` at element {index}")]
    NonFiniteGradient { name: String, index: usize },

    #[error("training diverged in {phase} phase at epoch {epoch}")]
    Diverged {
        phase: String,
        epoch: usize,
        history: Box<MetricHistory>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("external client: {0}")]
    Client(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
