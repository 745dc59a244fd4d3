use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::mpsc::sync_channel;

use ndarray::{Array3, ArrayD};
use nsx_core::rng::derive_seed;
use nsx_core::signal::stft;
use nsx_core::Real;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::evaluate::evaluate;
use super::optim::{adamw_step, clip_grad_norm, cosine_lr};
use super::{multitask_loss, Example, TrainConfig, TrainError};
use crate::autograd::Tape;
use crate::model::{save_checkpoint, Checkpoint, Model, OptimizerState};

pub const HISTORY_FILE: &str = "history.jsonl";
pub const BEST_CHECKPOINT: &str = "best.safetensors";
pub const LAST_CHECKPOINT: &str = "last.safetensors";
const DIVERGED_CHECKPOINT: &str = "diverged.safetensors";
const PREFETCH: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_sisdr: f64,
    pub lr: f64,
    pub clip_events: usize,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub history: Vec<EpochRecord>,
    /// Mean batch loss of every optimizer step, before the update.
    pub step_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_dev_sisdr: f64,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops once the metric has failed to improve for more than `patience` epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    stagnant: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::NEG_INFINITY, stagnant: 0 }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn update(&mut self, metric: f64) -> StopDecision {
        if metric > self.best {
            self.best = metric;
            self.stagnant = 0;
            StopDecision::Improved
        } else {
            self.stagnant += 1;
            if self.stagnant > self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }
}

type Batch<T> = Result<Vec<(usize, Array3<T>)>, TrainError>;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError {
    let path = path.to_path_buf();
    move |source| TrainError::Io { path, source }
}

/// Trains `model` in place. On return it holds the parameters of the best dev epoch.
/// With `out_dir`, the history and the best/last checkpoints are written there.
pub fn fit<T: Real>(
    model: &mut Model<T>,
    train: &[Example<T>],
    dev: &[Example<T>],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitReport, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::Empty("training"));
    }
    if dev.is_empty() {
        return Err(TrainError::Empty("dev"));
    }
    let mut history_file = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io(dir))?;
            let p = dir.join(HISTORY_FILE);
            Some((fs::File::create(&p).map_err(io(&p))?, p))
        }
        None => None,
    };
    let mut state = OptimizerState::zeros(&model.params);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = model.params.clone();
    let mut report =
        FitReport { history: Vec::new(), step_losses: Vec::new(), best_epoch: 0, best_dev_sisdr: f64::NEG_INFINITY, stopped_early: false };
    let mut steps = 0usize;

    for epoch in 0..cfg.max_epochs {
        let lr = cosine_lr(epoch, cfg.max_epochs, cfg.lr, cfg.lr_floor_ratio);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[epoch as u64])));
        let (mut loss_sum, mut batches, mut clip_events) = (0.0, 0usize, 0usize);
        let budget_hit = std::thread::scope(|scope| -> Result<bool, TrainError> {
            let (tx, rx) = sync_channel::<Batch<T>>(PREFETCH);
            let order = &order;
            scope.spawn(move || {
                for chunk in order.chunks(cfg.batch_size) {
                    let batch = chunk
                        .iter()
                        .map(|&i| Ok((i, stft(&train[i].mixture, &cfg.stft)?.into_inner())))
                        .collect::<Result<Vec<_>, TrainError>>();
                    if tx.send(batch).is_err() {
                        return;
                    }
                }
            });
            for batch in rx.iter() {
                let batch = batch?;
                let mut grads: Option<Vec<ArrayD<T>>> = None;
                let mut loss = 0.0;
                for (i, spec) in &batch {
                    let ex = &train[*i];
                    let tape = Tape::new();
                    let p = model.params.bind(&tape);
                    let out = model.forward(&tape, &p, &tape.constant(spec.clone().into_dyn()))?;
                    let terms = multitask_loss(&tape, &out, &ex.target, ex.label, cfg.gamma, &cfg.stft)?;
                    loss += terms.total.item().to_f64_lossy();
                    let mut g = tape.backward(&terms.total);
                    let g = p.gradients(&mut g);
                    grads = Some(match grads {
                        None => g,
                        Some(mut acc) => {
                            acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                            acc
                        }
                    });
                }
                let n = batch.len() as f64;
                loss /= n;
                let mut grads = grads.expect("nonempty batch");
                let finite = loss.is_finite() && grads.iter().all(|g| g.iter().all(|v| v.is_finite()));
                if !finite {
                    let checkpoint = out_dir.map(|d| d.join(DIVERGED_CHECKPOINT));
                    if let Some(path) = &checkpoint {
                        let ckpt = Checkpoint { model: model.clone(), epoch: epoch as u64, optimizer: Some(state.clone()) };
                        save_checkpoint(path, &ckpt)?;
                    }
                    return Err(TrainError::Diverged { epoch, step: steps, checkpoint });
                }
                let inv = T::lit(1.0 / n);
                grads.iter_mut().for_each(|g| g.mapv_inplace(|v| v * inv));
                if clip_grad_norm(&mut grads, cfg.clip_norm).1 {
                    clip_events += 1;
                }
                adamw_step(&mut model.params, &grads, &mut state, lr, cfg);
                report.step_losses.push(loss);
                loss_sum += loss;
                batches += 1;
                steps += 1;
                if cfg.max_steps.is_some_and(|m| steps >= m) {
                    return Ok(true);
                }
            }
            Ok(false)
        })?;

        let dev_sisdr = evaluate(model, dev, &cfg.stft).mean_si_sdr();
        let record = EpochRecord { epoch, train_loss: loss_sum / batches.max(1) as f64, dev_sisdr, lr, clip_events };
        if let Some((f, p)) = history_file.as_mut() {
            writeln!(f, "{}", serde_json::to_string(&record)?).map_err(io(p))?;
        }
        on_epoch(&record);
        report.history.push(record);
        let decision = stopper.update(if dev_sisdr.is_nan() { f64::NEG_INFINITY } else { dev_sisdr });
        if decision == StopDecision::Improved {
            best_params = model.params.clone();
            report.best_epoch = epoch;
            report.best_dev_sisdr = dev_sisdr;
            if let Some(dir) = out_dir {
                let best = Model { params: best_params.clone(), ..model.clone() };
                save_checkpoint(&dir.join(BEST_CHECKPOINT), &Checkpoint { model: best, epoch: epoch as u64, optimizer: None })?;
            }
        }
        if let Some(dir) = out_dir {
            let ckpt = Checkpoint { model: model.clone(), epoch: epoch as u64, optimizer: Some(state.clone()) };
            save_checkpoint(&dir.join(LAST_CHECKPOINT), &ckpt)?;
        }
        if decision == StopDecision::Stop {
            report.stopped_early = true;
            break;
        }
        if budget_hit {
            break;
        }
    }
    model.params = best_params;
    Ok(report)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{load_checkpoint, Architecture, ModelConfig};
    use crate::trainer::evaluate::evaluate;
    use nsx_core::signal::StftConfig;

    #[test]
    fn frozen_metric_stops_after_six_stagnant_epochs() {
        let mut s = EarlyStopping::new(5);
        assert_eq!(s.update(3.0), StopDecision::Improved);
        let mut epochs = 0;
        loop {
            epochs += 1;
            if s.update(3.0) == StopDecision::Stop {
                break;
            }
        }
        assert_eq!(epochs, 6);
        assert_eq!(s.best(), 3.0);
        let mut s = EarlyStopping::new(0);
        s.update(1.0);
        assert_eq!(s.update(2.0), StopDecision::Improved);
        assert_eq!(s.update(2.0), StopDecision::Stop);
    }

    fn toy(n: usize) -> Vec<Example<f64>> {
        (0..n)
            .map(|k| {
                let target: Vec<f64> = (0..256).map(|i| ((i * (k + 2)) as f64 * 0.05).sin()).collect();
                let mixture = target.iter().enumerate().map(|(i, t)| t + 0.7 * ((i * 11 + k) as f64 * 0.9).sin()).collect();
                Example { id: format!("{k}"), scenario: "toy".into(), mixture, target, label: Some(k % 2) }
            })
            .collect()
    }

    fn small() -> (ModelConfig, TrainConfig) {
        let m = ModelConfig {
            blocks: 1,
            channels: 4,
            att_dim: 2,
            heads: 2,
            lstm_hidden: Some(4),
            bins: 17,
            speakers: 2,
            ..ModelConfig::default()
        };
        let t = TrainConfig { batch_size: 2, max_epochs: 4, stft: StftConfig::with_bins(17), lr: 3e-3, ..TrainConfig::default() };
        (m, t)
    }

    #[test]
    fn best_checkpoint_matches_best_history_entry() {
        let (mc, tc) = small();
        let data = toy(4);
        let dir = tempfile::tempdir().unwrap();
        let mut model = Model::<f64>::new(mc, 3).unwrap();
        let report = fit(&mut model, &data, &data[..2], &tc, Some(dir.path()), |_| {}).unwrap();
        assert_eq!(report.history.len(), 4);
        assert_eq!(report.step_losses.len(), 8);
        let best = report.history.iter().map(|r| r.dev_sisdr).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(report.best_dev_sisdr, best);
        let ckpt = load_checkpoint::<f64>(&dir.path().join(BEST_CHECKPOINT)).unwrap();
        assert_eq!(ckpt.epoch as usize, report.best_epoch);
        assert_eq!(evaluate(&ckpt.model, &data[..2], &tc.stft).mean_si_sdr(), best);
        assert_eq!(ckpt.model.params, model.params);
        let lines = fs::read_to_string(dir.path().join(HISTORY_FILE)).unwrap();
        let parsed: Vec<EpochRecord> = lines.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(parsed, report.history);
        assert!(load_checkpoint::<f64>(&dir.path().join(LAST_CHECKPOINT)).unwrap().optimizer.is_some());
    }

    #[test]
    fn identical_seeds_give_identical_curves() {
        let (mc, tc) = small();
        let tc = TrainConfig { max_epochs: 2, ..tc };
        let data = toy(3);
        let run = || {
            let mut m = Model::<f64>::new(mc.clone(), 9).unwrap();
            fit(&mut m, &data, &data, &tc, None, |_| {}).unwrap().step_losses
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn step_budget_and_empty_sets() {
        let (mc, tc) = small();
        let mc = ModelConfig { architecture: Architecture::Lstm, lstm_layers: 1, lstm_units: 3, ..mc };
        let data = toy(4);
        let mut m = Model::<f64>::new(mc, 1).unwrap();
        let r = fit(&mut m, &data, &data, &TrainConfig { max_steps: Some(3), ..tc.clone() }, None, |_| {}).unwrap();
        assert_eq!(r.step_losses.len(), 3);
        assert_eq!(r.history.len(), 2);
        assert!(matches!(fit(&mut m, &[], &data, &tc, None, |_| {}), Err(TrainError::Empty("training"))));
    }
}
