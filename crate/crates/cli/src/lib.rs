//! Pipelines behind the `pnr` binary.
//!
//! Each command reads a [`RunConfig`], writes its CSV and JSON outputs to a
//! directory, and returns the report it serialized.

use std::path::PathBuf;

use pnr_core::{EstimationError, IngestError, SimError};
use thiserror::Error;

pub mod commands;
pub mod config;
mod report;

pub use config::RunConfig;
pub use report::read_histogram;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("statistical degeneracy: {0}")]
    Degenerate(String),
}

impl CliError {
    /// 2 for configuration, 3 for input/output, 4 for statistical degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Parse { .. } => 3,
            CliError::Degenerate(_) => 4,
        }
    }
}

impl From<EstimationError> for CliError {
    fn from(e: EstimationError) -> Self {
        match e {
            EstimationError::Model(_) | EstimationError::TooManyCandidates(_) | EstimationError::MismatchedN { .. } => {
                CliError::Config(e.to_string())
            }
            EstimationError::Saturated { .. } => CliError::Degenerate(format!(
                "{e}; every bin clicked on every pulse, so the mean photon number is unbounded"
            )),
            _ => CliError::Degenerate(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Config(e.to_string())
    }
}

/// Converts ingest errors for the file at `path`.
pub(crate) fn ingest_error(path: &std::path::Path, e: IngestError) -> CliError {
    match e {
        IngestError::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        IngestError::Malformed { .. } | IngestError::UnknownChannel { .. } | IngestError::NoTrigger => {
            CliError::Parse {
                path: path.to_path_buf(),
                reason: e.to_string(),
            }
        }
        IngestError::Sample(EstimationError::CountOutOfRange { .. }) => CliError::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        },
        IngestError::Sample(inner) => inner.into(),
        _ => CliError::Config(e.to_string()),
    }
}
