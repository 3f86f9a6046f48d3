//! Configuration files, replica orchestration, output writers and reports.

pub mod config;
pub mod output;
pub mod replicas;
pub mod report;

use thiserror::Error;

use crate::diagnostics::DiagnosticsError;
use crate::model::ScenarioError;

pub use config::{parse_config, ConfigError, OutputFormat, RawConfig, RunConfig};
pub use replicas::{run_batch, run_replica, simulate, Batch, ReplicaResult, RunSummary};
pub use report::{diagnose, Report, ReportKind};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed output: {0}")]
    Format(String),
    #[error("worker pool: {0}")]
    Workers(String),
}
