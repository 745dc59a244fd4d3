use ndarray::{ArrayD, Zip};
use nsx_core::Real;

use super::TrainConfig;
use crate::model::OptimizerState;
use crate::params::ParamStore;

/// Cosine annealing from `lr` at epoch 0 to `lr·floor_ratio` at `max_epochs`.
pub fn cosine_lr(epoch: usize, max_epochs: usize, lr: f64, floor_ratio: f64) -> f64 {
    let floor = lr * floor_ratio;
    let x = epoch.min(max_epochs) as f64 / max_epochs as f64;
    floor + 0.5 * (lr - floor) * (1.0 + (std::f64::consts::PI * x).cos())
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping and whether clipping happened.
pub fn clip_grad_norm<T: Real>(grads: &mut [ArrayD<T>], max_norm: f64) -> (f64, bool) {
    let norm = grads.iter().flat_map(|g| g.iter()).map(|v| v.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = T::lit(max_norm / (norm + 1e-6));
        grads.iter_mut().for_each(|g| g.mapv_inplace(|v| v * s));
        (norm, true)
    } else {
        (norm, false)
    }
}

/// One AdamW update with decoupled weight decay.
pub fn adamw_step<T: Real>(
    params: &mut ParamStore<T>,
    grads: &[ArrayD<T>],
    state: &mut OptimizerState<T>,
    lr: f64,
    cfg: &TrainConfig,
) {
    state.step += 1;
    let [b1, b2] = cfg.betas;
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let (b1, b2, eps) = (T::lit(b1), T::lit(b2), T::lit(cfg.adam_eps));
    let (one, step, decay) = (T::one(), T::lit(lr / c1), T::lit(1.0 - lr * cfg.weight_decay));
    let c2s = T::lit(c2.sqrt());
    let ids: Vec<_> = params.ids().collect();
    for (k, id) in ids.into_iter().enumerate() {
        Zip::from(params.get_mut(id))
            .and(&grads[k])
            .and(&mut state.m[k])
            .and(&mut state.v[k])
            .for_each(|p, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                *p = *p * decay - step * *m / (v.sqrt() / c2s + eps);
            });
    }
}
