use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time range: b = {b} must exceed a = {a}")]
    InvalidRange { a: f64, b: f64 },

    #[error("a time grid needs at least one step")]
    ZeroSteps,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("level n = {n} does not divide the grid step count N = {steps}")]
    Divisibility { n: usize, steps: usize },

    #[error("operator evaluation failed at scenario {scenario}, node {node}: {reason}")]
    OperatorEvaluation {
        scenario: usize,
        node: usize,
        reason: String,
    },

    #[error("gap {delta} is below the grid resolution {dt}")]
    BelowResolution { delta: f64, dt: f64 },

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed ensemble data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
