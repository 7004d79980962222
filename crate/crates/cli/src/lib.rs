//! Batch side of the active-learning loop: simulated-oracle experiments, the
//! uncertainty-band study, and report consolidation.

pub mod experiment;
pub mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use experiment::{
    run_band_study, run_experiment, BandGrid, DatasetSource, ExperimentOutcome, ExperimentSpec,
};
pub use report::report;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad spec or flags; nothing was run.
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("MALFORMED_HISTORY: {file}: {detail}")]
    MalformedHistory { file: PathBuf, detail: String },
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
