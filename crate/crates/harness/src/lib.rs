//! Experiment harness: strict TOML configs, a seeded grid runner that lays
//! out one directory per (cell, seed) run, cross-seed aggregation, and report
//! emission (CSV, JSON, plain text, SVG).

pub mod aggregate;
pub mod config;
pub mod report;
pub mod runner;

use std::path::PathBuf;

use thiserror::Error;

pub use aggregate::{aggregate, parse_summary_csv, CellMetric, SummaryTable};
pub use config::{load_config, parse_config, DataSource, ExperimentConfig, GridCell};
pub use report::emit_report;
pub use runner::{run_experiment, ExperimentOutcome, Manifest, RunRecord};

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Config problems, collected exhaustively before any run starts.
    #[error("invalid config:\n{}", .0.iter().map(|m| format!("  - {m}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<String>),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Data(#[from] esgrl_core::marketdata::DataError),
    #[error(transparent)]
    Indicator(#[from] esgrl_core::indicators::IndicatorError),
    #[error(transparent)]
    Env(#[from] esgrl_core::env::EnvError),
    #[error(transparent)]
    Agent(#[from] esgrl_core::agents::AgentError),
    #[error(transparent)]
    Analytics(#[from] esgrl_core::analytics::AnalyticsError),
    #[error("{0}")]
    Report(String),
}

impl HarnessError {
    /// Process exit code: 1 for config validation failures, 2 for everything
    /// that goes wrong while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 1,
            _ => 2,
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io { path: path.to_path_buf(), source }
}
