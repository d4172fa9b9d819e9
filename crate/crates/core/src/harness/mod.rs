//! Configuration, end-to-end comparison, brute-force oracles and output.

pub mod config;
pub mod experiment;
pub mod oracle;
pub mod output;

pub use config::{ExperimentConfig, Tolerances, CONFIG_VERSION};
pub use experiment::{run_experiment, ComparisonReport, PeriodRow};
pub use output::emit_outputs;

use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{stage} stage failed: {message}")]
    Stage {
        stage: &'static str,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("refusing to overwrite {0}")]
    Exists(PathBuf),
    #[error("oracle: {0}")]
    Oracle(String),
}

impl HarnessError {
    pub fn stage(stage: &'static str, err: impl std::fmt::Display) -> Self {
        Self::Stage {
            stage,
            message: err.to_string(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
