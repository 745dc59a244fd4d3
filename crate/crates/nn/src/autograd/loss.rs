use ndarray::{ArrayD, Ix3, IxDyn};
use nsx_core::signal::{istft, istft_adjoint, si_sdr, SignalError, StftConfig, SI_SDR_CLAMP_DB};
use nsx_core::Real;

use super::{Tape, Var};

impl<T: Real> Tape<T> {
    /// Waveform of `length` samples from a `[2, F, T]` real/imaginary spectrogram.
    pub fn istft(&self, spec: &Var<T>, length: usize, cfg: &StftConfig) -> Result<Var<T>, SignalError> {
        let view = spec.value.view().into_dimensionality::<Ix3>().map_err(|_| SignalError::Shape {
            found: spec.shape().to_vec(),
            expected_bins: cfg.bins(),
        })?;
        let frames = view.dim().2;
        let wave = istft(view, length, cfg)?;
        // the adjoint is checked here so the backward closure cannot fail
        istft_adjoint(&vec![T::zero(); length], frames, cfg)?;
        let ss = spec.slot();
        let cfg = cfg.clone();
        let out = ArrayD::from_shape_vec(IxDyn(&[length]), wave).expect("waveform");
        Ok(self.record(out, &[spec], move |g, sink| {
            sink.add_opt(ss, || {
                let g = g.as_slice().expect("contiguous waveform gradient");
                istft_adjoint(g, frames, &cfg).expect("validated above").into_dyn()
            })
        }))
    }

    /// SI-SDR in dB of `estimate` against a fixed `reference`, clamped like
    /// [`nsx_core::signal::si_sdr`]; the gradient is zero where the clamp is active.
    pub fn si_sdr(&self, estimate: &Var<T>, reference: &[T]) -> Result<Var<T>, SignalError> {
        let e = estimate.value.as_slice().ok_or(SignalError::Config("estimate must be contiguous".into()))?;
        let value = si_sdr(e, reference)?;
        let clamped = value.abs() >= T::lit(SI_SDR_CLAMP_DB);
        let se = estimate.slot();
        let (est, reference) = (estimate.value.clone(), reference.to_vec());
        let out = ArrayD::from_elem(IxDyn(&[]), value);
        Ok(self.record(out, &[estimate], move |g, sink| {
            let up = *g.iter().next().expect("scalar");
            sink.add_opt(se, || {
                if clamped {
                    return ArrayD::zeros(est.raw_dim());
                }
                let e = est.as_slice().expect("contiguous");
                let dot = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| x * y).sum::<T>();
                let er = dot(e, &reference);
                let rr = dot(&reference, &reference);
                let ee = dot(e, e);
                let alpha = er / rr;
                let p = er * er / rr;
                let two = T::lit(2.0);
                let k = T::lit(10.0 / std::f64::consts::LN_10) * up;
                let grad: Vec<T> = e
                    .iter()
                    .zip(&reference)
                    .map(|(&ev, &rv)| k * (two * alpha * rv / p - (two * ev - two * alpha * rv) / (ee - p)))
                    .collect();
                ArrayD::from_shape_vec(est.raw_dim(), grad).expect("gradient shape")
            })
        }))
    }

    /// Softmax cross-entropy of a logit vector against a class index.
    pub fn cross_entropy(&self, logits: &Var<T>, label: usize) -> Var<T> {
        let z = logits.value.as_slice().expect("contiguous logits");
        assert!(label < z.len(), "label {label} outside {} classes", z.len());
        let m = z.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let exps: Vec<T> = z.iter().map(|&v| (v - m).exp()).collect();
        let total: T = exps.iter().copied().sum();
        let loss = total.ln() + m - z[label];
        let probs: Vec<T> = exps.iter().map(|&v| v / total).collect();
        let sl = logits.slot();
        let shape = logits.shape().to_vec();
        self.record(ArrayD::from_elem(IxDyn(&[]), loss), &[logits], move |g, sink| {
            let up = *g.iter().next().expect("scalar");
            sink.add_opt(sl, || {
                let mut d = probs.clone();
                d[label] -= T::one();
                ArrayD::from_shape_vec(IxDyn(&shape), d.into_iter().map(|v| v * up).collect()).expect("shape")
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::gradcheck::{check, random};

    #[test]
    fn istft_gradient_matches_finite_differences() {
        let cfg = StftConfig::with_bins(9);
        check(&[random(&[2, 9, 6], 1)], move |t, v| t.istft(&v[0], 40, &cfg).unwrap());
    }

    #[test]
    fn si_sdr_gradient_matches_finite_differences() {
        let reference: Vec<f64> = random(&[50], 2).into_iter().collect();
        let r = reference.clone();
        check(&[random(&[50], 3)], move |t, v| t.si_sdr(&v[0], &r).unwrap());
        let tape = Tape::<f64>::new();
        let e = tape.leaf(ArrayD::from_shape_vec(IxDyn(&[50]), reference.clone()).unwrap());
        let s = tape.si_sdr(&e, &reference).unwrap();
        assert_eq!(s.item(), SI_SDR_CLAMP_DB);
        assert!(tape.backward(&s).wrt(&e).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn cross_entropy_closed_form_and_gradient() {
        let tape = Tape::<f64>::new();
        let z = tape.leaf(ArrayD::zeros(IxDyn(&[10])));
        let ce = tape.cross_entropy(&z, 3);
        assert!((ce.item() - 10f64.ln()).abs() < 1e-12);
        check(&[random(&[7], 4)], |t, v| t.cross_entropy(&v[0], 5));
    }
}
