use nsx_core::signal::stft;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{multitask_loss, Example, TrainConfig, TrainError};
use crate::autograd::Tape;
use crate::model::Model;

/// Analytic versus central-difference derivative of the total loss for one scalar parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientProbe {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

fn total_loss(model: &Model<f64>, ex: &Example<f64>, cfg: &TrainConfig, tape: &Tape<f64>) -> Result<(f64, Vec<ndarray::ArrayD<f64>>), TrainError> {
    let spec = stft(&ex.mixture, &cfg.stft)?.into_inner().into_dyn();
    let p = model.params.bind(tape);
    let out = model.forward(tape, &p, &tape.constant(spec))?;
    let terms = multitask_loss(tape, &out, &ex.target, ex.label, cfg.gamma, &cfg.stft)?;
    let value = terms.total.item();
    if !tape.grad_enabled() {
        return Ok((value, Vec::new()));
    }
    let mut g = tape.backward(&terms.total);
    Ok((value, p.gradients(&mut g)))
}

/// Compares gradients of the multi-task loss on `ex` for `count` scalar parameters
/// drawn uniformly over all parameter entries.
pub fn probe_gradients(
    model: &Model<f64>,
    ex: &Example<f64>,
    cfg: &TrainConfig,
    count: usize,
    step: f64,
    seed: u64,
) -> Result<Vec<GradientProbe>, TrainError> {
    let (_, grads) = total_loss(model, ex, cfg, &Tape::new())?;
    let ids: Vec<_> = model.params.ids().collect();
    let total = model.params.numel();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::with_capacity(count);
    let mut work = model.clone();
    for _ in 0..count {
        let mut flat = rng.gen_range(0..total);
        let k = ids
            .iter()
            .position(|&id| {
                let n = model.params.get(id).len();
                if flat < n {
                    true
                } else {
                    flat -= n;
                    false
                }
            })
            .expect("index within numel");
        let id = ids[k];
        let original = model.params.get(id).as_slice_memory_order().expect("contiguous")[flat];
        let mut eval = |value: f64| -> Result<f64, TrainError> {
            work.params.get_mut(id).as_slice_memory_order_mut().expect("contiguous")[flat] = value;
            Ok(total_loss(&work, ex, cfg, &Tape::inference())?.0)
        };
        let numeric = (eval(original + step)? - eval(original - step)?) / (2.0 * step);
        eval(original)?;
        let analytic = grads[k].as_slice_memory_order().expect("contiguous")[flat];
        let scale = analytic.abs().max(numeric.abs()).max(1e-12);
        probes.push(GradientProbe {
            param: model.params.name(id).to_string(),
            index: flat,
            analytic,
            numeric,
            rel_error: (analytic - numeric).abs() / scale,
        });
    }
    Ok(probes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use nsx_core::signal::StftConfig;

    #[test]
    fn tiny_model_gradients_match_central_differences() {
        let cfg = ModelConfig {
            blocks: 1,
            channels: 4,
            att_dim: 2,
            heads: 2,
            lstm_hidden: Some(4),
            bins: 17,
            speakers: 3,
            ..ModelConfig::default()
        };
        let model = Model::<f64>::new(cfg, 11).unwrap();
        let target: Vec<f64> = (0..200).map(|i| (i as f64 * 0.09).sin() * (i as f64 * 0.013).cos()).collect();
        let mixture = target.iter().enumerate().map(|(i, t)| t + 0.6 * ((i * 13) as f64 * 0.41).sin()).collect();
        let ex = Example { id: "g".into(), scenario: "toy".into(), mixture, target, label: Some(1) };
        let tc = TrainConfig { stft: StftConfig::with_bins(17), ..TrainConfig::default() };
        let probes = probe_gradients(&model, &ex, &tc, 12, 1e-4, 2).unwrap();
        for p in &probes {
            assert!(p.rel_error < 1e-3, "{p:?}");
        }
    }
}
