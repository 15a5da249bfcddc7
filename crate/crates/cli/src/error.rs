use thiserror::Error;

use d2dlab::analysis::AnalysisError;
use d2dlab::ingest::IngestError;
use d2dlab::policy::PolicyError;
use d2dlab::popularity::PopularityError;
use d2dlab::simulator::SimError;

/// Process exit codes.
pub const EXIT_PARAM: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;
/// `validate-mstar` ran but some point exceeded the tolerance.
pub const EXIT_VALIDATION: i32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid parameters: {0}")]
    Param(String),
    #[error("{0}")]
    Io(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("{0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Param(_) => EXIT_PARAM,
            CliError::Io(_) => EXIT_IO,
            CliError::Internal(_) => EXIT_INTERNAL,
            CliError::Validation(_) => EXIT_VALIDATION,
        }
    }

    pub fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::NoConvergence { .. } => CliError::Internal(e.to_string()),
            _ => CliError::Param(e.to_string()),
        }
    }
}

impl From<PopularityError> for CliError {
    fn from(e: PopularityError) -> Self {
        CliError::Param(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Policy(p) => p.into(),
            AnalysisError::NonFinite => CliError::Internal(e.to_string()),
            _ => CliError::Param(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Policy(p) => p.into(),
            SimError::Popularity(p) => p.into(),
            _ => CliError::Param(e.to_string()),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Popularity(p) => p.into(),
            other => CliError::Io(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
