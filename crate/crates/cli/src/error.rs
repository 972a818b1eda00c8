use evppi::EvppiError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or flag combinations.
    #[error("{0}")]
    Usage(String),

    /// Unreadable or malformed input.
    #[error("{0}")]
    Input(EvppiError),

    #[error("estimation failed: {0}")]
    Estimation(EvppiError),

    #[error("cannot write `{path}`: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => 1,
            CliError::Estimation(_) | CliError::Write { .. } => 2,
        }
    }
}

impl From<EvppiError> for CliError {
    fn from(e: EvppiError) -> Self {
        match e {
            EvppiError::Parse(_)
            | EvppiError::UnknownParameter { .. }
            | EvppiError::UnknownTreatment { .. }
            | EvppiError::InvalidArgument(_)
            | EvppiError::Io(_) => CliError::Input(e),
            _ => CliError::Estimation(e),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
