use nsx_core::signal::StftConfig;
use nsx_core::Real;

use super::TrainError;
use crate::autograd::{Tape, Var};
use crate::model::Output;

/// Differentiable total loss with its two terms reported separately.
pub struct LossTerms<T> {
    pub total: Var<T>,
    pub si_sdr: f64,
    pub ce: f64,
}

/// `−SI-SDR(istft(Y), s) + γ·Σ_c CE(ŷ_c, label)`. Without a label, logits, or with
/// `γ = 0` the cross-entropy term is omitted.
pub fn multitask_loss<T: Real>(
    tape: &Tape<T>,
    out: &Output<T>,
    target: &[T],
    label: Option<usize>,
    gamma: f64,
    stft: &StftConfig,
) -> Result<LossTerms<T>, TrainError> {
    let wave = tape.istft(&out.spec, target.len(), stft)?;
    let sdr = tape.si_sdr(&wave, target)?;
    let si_sdr = sdr.item().to_f64_lossy();
    let mut total = tape.scale(&sdr, -T::one());
    let mut ce_sum = 0.0;
    if let (Some(label), true) = (label, gamma != 0.0 && !out.logits.is_empty()) {
        let classes = out.logits[0].shape()[0];
        if label >= classes {
            return Err(TrainError::Label { label, classes });
        }
        let mut ce: Option<Var<T>> = None;
        for l in &out.logits {
            let c = tape.cross_entropy(l, label);
            ce_sum += c.item().to_f64_lossy();
            ce = Some(match ce {
                None => c,
                Some(acc) => tape.add(&acc, &c),
            });
        }
        let ce = ce.expect("nonempty logits");
        total = tape.add(&total, &tape.scale(&ce, T::lit(gamma)));
    }
    Ok(LossTerms { total, si_sdr, ce: ce_sum })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};
    use nsx_core::signal::stft;

    fn output(spec: ArrayD<f64>, logits: Vec<ArrayD<f64>>, tape: &Tape<f64>) -> Output<f64> {
        Output {
            spec: tape.leaf(spec),
            logits: logits.into_iter().map(|l| tape.leaf(l)).collect(),
            attention: Vec::new(),
        }
    }

    fn target() -> Vec<f64> {
        (0..320).map(|i| (i as f64 * 0.07).sin() + 0.3 * (i as f64 * 0.31).cos()).collect()
    }

    #[test]
    fn perfect_prediction_hits_the_clamp() {
        let cfg = StftConfig::default();
        let s = target();
        let spec = stft(&s, &cfg).unwrap().into_inner().into_dyn();
        let tape = Tape::new();
        let out = output(spec, vec![], &tape);
        let l = multitask_loss(&tape, &out, &s, Some(0), 0.1, &cfg).unwrap();
        assert_eq!(l.total.item(), -60.0);
        assert_eq!(l.ce, 0.0);
    }

    #[test]
    fn uniform_logits_cost_ln_n_per_block() {
        let cfg = StftConfig::default();
        let s = target();
        let spec = stft(&s, &cfg).unwrap().into_inner().into_dyn().mapv(|v| v * 0.5 + 0.01);
        let tape = Tape::new();
        let logits = vec![ArrayD::zeros(IxDyn(&[10])); 3];
        let out = output(spec, logits, &tape);
        let l = multitask_loss(&tape, &out, &s, Some(4), 0.1, &cfg).unwrap();
        assert!((l.ce - 3.0 * 10f64.ln()).abs() < 1e-12);
        assert!((l.total.item() - (-l.si_sdr + 0.1 * 3.0 * 10f64.ln())).abs() < 1e-9);
        assert!(((0.1 * 10f64.ln()) - 0.2303).abs() < 1e-4);
    }

    #[test]
    fn zero_gamma_is_pure_si_sdr() {
        let cfg = StftConfig::default();
        let s = target();
        let spec = stft(&s, &cfg).unwrap().into_inner().into_dyn().mapv(|v| v + 0.02);
        let tape = Tape::new();
        let out = output(spec, vec![ArrayD::from_elem(IxDyn(&[3]), 0.4)], &tape);
        let l = multitask_loss(&tape, &out, &s, Some(1), 0.0, &cfg).unwrap();
        assert_eq!(l.total.item(), -l.si_sdr);
        assert!(matches!(
            multitask_loss(&tape, &out, &s, Some(3), 0.1, &cfg),
            Err(TrainError::Label { label: 3, classes: 3 })
        ));
    }
}
