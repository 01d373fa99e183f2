use std::path::PathBuf;

use devfactor_core::integrand::{ParseError, SingularityReport};
use thiserror::Error;

/// Failures of a CLI run, each mapped to a fixed exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot {action} {}: {source}", path.display())]
    Io {
        action: &'static str,
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error in {field} at byte {}: {source}", source.offset())]
    Parse { field: String, source: ParseError },
    #[error("singular integrand {field} at L = {cutoff}: {report}")]
    Singular {
        field: String,
        cutoff: f64,
        report: SingularityReport,
    },
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("{0}")]
    Unclassified(String),
    #[error("model mismatch: {0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Parse { .. } => 3,
            CliError::Singular { .. } | CliError::Integration(_) => 4,
            CliError::Unclassified(_) | CliError::Mismatch(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
