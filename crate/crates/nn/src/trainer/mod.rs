//! Multi-task training, early stopping and evaluation.

mod config;
mod evaluate;
mod fit;
mod gradcheck;
mod loss;
mod optim;

pub use config::TrainConfig;
pub use evaluate::{evaluate, extract, evaluate_dataset, evaluate_with, EvalReport, SampleMetrics, ScenarioSummary};
pub use fit::{fit, EarlyStopping, EpochRecord, FitReport, StopDecision, BEST_CHECKPOINT, HISTORY_FILE, LAST_CHECKPOINT};
pub use gradcheck::{probe_gradients, GradientProbe};
pub use loss::{multitask_loss, LossTerms};
pub use optim::{adamw_step, clip_grad_norm, cosine_lr};

use std::path::PathBuf;

use nsx_core::mixer::{MixerError, MixtureSample};
use nsx_core::signal::SignalError;
use nsx_core::Real;
use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("speaker label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("{0} set is empty")]
    Empty(&'static str),
    #[error("loss diverged at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize, checkpoint: Option<PathBuf> },
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mixer(#[from] MixerError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One training or evaluation item in memory.
#[derive(Debug, Clone)]
pub struct Example<T> {
    pub id: String,
    pub scenario: String,
    pub mixture: Vec<T>,
    pub target: Vec<T>,
    /// Training-corpus speaker index; `None` disables the cross-entropy term.
    pub label: Option<usize>,
}

impl<T: Real> Example<T> {
    pub fn from_sample(id: impl Into<String>, sample: MixtureSample<T>, with_label: bool) -> Self {
        Self {
            id: id.into(),
            scenario: sample.scenario.key(),
            label: with_label.then_some(sample.target_speaker_label),
            mixture: sample.mixture,
            target: sample.target,
        }
    }
}
