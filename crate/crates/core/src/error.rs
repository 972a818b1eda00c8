use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvppiError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {what} at row {row}, column {col}")]
    NonFinite {
        what: &'static str,
        row: usize,
        col: usize,
    },

    #[error("need at least {min} simulations, got {got}")]
    TooFewSamples { min: usize, got: usize },

    #[error("{what} index {index} out of range (length {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown parameter `{name}`; available parameters: {}", available.join(", "))]
    UnknownParameter { name: String, available: Vec<String> },

    #[error("unknown treatment `{name}`; available treatments: {}", available.join(", "))]
    UnknownTreatment { name: String, available: Vec<String> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("model evaluation failed at outer draw {outer}, inner draw {inner}: {message}")]
    ModelEvaluation {
        outer: usize,
        inner: usize,
        message: String,
    },

    #[error("bootstrap aborted: {failed} of {total} replicates failed")]
    BootstrapAborted { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvppiError>;
