use pointhop::classify::ClassifyError;
use pointhop::codec::CodecError;
use pointhop::ensemble::EnsembleError;
use pointhop::saab::SaabError;
use pointhop::{PcioError, PipelineError};
use thiserror::Error;

/// Command failure, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    /// 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    /// Prefix the message with some context, keeping the class.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{what}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{what}: {m}")),
            CliError::Numeric(m) => CliError::Numeric(format!("{what}: {m}")),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl From<PcioError> for CliError {
    fn from(e: PcioError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SaabError> for CliError {
    fn from(e: SaabError) -> Self {
        match e {
            SaabError::NonFinite | SaabError::TooFewSamples { .. } => CliError::Numeric(e.to_string()),
            SaabError::TooManyFilters { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::InvalidConfig(_) | PipelineError::ChannelOutOfRange { .. } => CliError::Usage(e.to_string()),
            PipelineError::Saab(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ClassifyError> for CliError {
    fn from(e: ClassifyError) -> Self {
        match e {
            ClassifyError::NonFinite(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Pipeline(inner) => inner.into(),
            EnsembleError::Classify(inner) => inner.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}
