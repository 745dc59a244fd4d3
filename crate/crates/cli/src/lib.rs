//! Experiment orchestration for the `nsx` command: configuration, cached
//! pipeline stages, reports and figures.

pub mod config;
pub mod pipeline;
pub mod plot;
pub mod report;

pub use config::{ExperimentConfig, SetSpec, Split, Variant};
pub use pipeline::{Pipeline, StageRecord};
pub use report::ReportRow;

use std::path::PathBuf;

use thiserror::Error;

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("config file {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },
    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: String, source: BoxError },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("plot {path}: {message}")]
    Plot { path: PathBuf, message: String },
}
