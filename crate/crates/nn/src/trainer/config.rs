use nsx_core::signal::StftConfig;
use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    /// Final learning rate as a fraction of `lr`.
    pub lr_floor_ratio: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Weight of the summed speaker cross-entropy terms.
    pub gamma: f64,
    pub betas: [f64; 2],
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    /// Optional cap on optimizer steps, for budgeted runs.
    pub max_steps: Option<usize>,
    pub seed: u64,
    /// Informational only; computation always runs on the CPU.
    pub device: String,
    pub stft: StftConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            lr: 1e-3,
            lr_floor_ratio: 0.01,
            max_epochs: 100,
            patience: 5,
            gamma: 0.1,
            betas: [0.9, 0.999],
            adam_eps: 1e-8,
            weight_decay: 0.01,
            clip_norm: 5.0,
            max_steps: None,
            seed: 0,
            device: "cpu".into(),
            stft: StftConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if !(self.lr > 0.0) || !(0.0..=1.0).contains(&self.lr_floor_ratio) {
            return bad("lr must be positive and lr_floor_ratio in [0, 1]");
        }
        if !(self.gamma >= 0.0) || !(self.weight_decay >= 0.0) || !(self.clip_norm > 0.0) {
            return bad("gamma and weight_decay must be non-negative, clip_norm positive");
        }
        if !self.betas.iter().all(|b| (0.0..1.0).contains(b)) || !(self.adam_eps > 0.0) {
            return bad("betas must lie in [0, 1) and adam_eps be positive");
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be positive when set");
        }
        self.stft.validate().map_err(|e| TrainError::Config(e.to_string()))
    }
}
