use std::sync::Arc;

use ndarray::{Array3, ArrayView3, Axis};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::SignalError;
use crate::Real;

/// Analysis/synthesis parameters. The window length equals `n_fft`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    /// 16 ms window, 8 ms hop, 256-point DFT at 16 kHz.
    fn default() -> Self {
        Self { n_fft: 256, hop: 128 }
    }
}

impl StftConfig {
    /// Shortened transform used by small gradient-check configurations.
    pub fn with_bins(bins: usize) -> Self {
        let n_fft = 2 * (bins - 1);
        Self { n_fft, hop: n_fft / 2 }
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    fn pad(&self) -> usize {
        self.n_fft / 2
    }

    /// Frame count produced for a signal of `len` samples under centered padding.
    pub fn frames(&self, len: usize) -> usize {
        1 + (len + 2 * self.pad() - self.n_fft) / self.hop
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        if self.n_fft < 4 || self.n_fft % 2 != 0 {
            return Err(SignalError::Config(format!("n_fft must be even and >= 4, got {}", self.n_fft)));
        }
        if self.hop != self.n_fft / 2 {
            // sqrt-Hann only satisfies COLA at 50% overlap
            return Err(SignalError::Config(format!(
                "hop must be n_fft/2 for sqrt-Hann COLA, got hop={} n_fft={}",
                self.hop, self.n_fft
            )));
        }
        Ok(())
    }
}

/// Periodic square-root Hann window.
pub fn sqrt_hann<T: Real>(n: usize) -> Vec<T> {
    (0..n)
        .map(|i| {
            let phase = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            T::lit((0.5 - 0.5 * phase.cos()).sqrt())
        })
        .collect()
}

/// Real/imaginary planes of a one-sided STFT, shape `2 × F × T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram<T> {
    ri: Array3<T>,
}

impl<T: Real> ComplexSpectrogram<T> {
    pub fn new(ri: Array3<T>) -> Result<Self, SignalError> {
        if ri.shape()[0] != 2 {
            return Err(SignalError::Shape { found: ri.shape().to_vec(), expected_bins: ri.shape()[1] });
        }
        if ri.iter().any(|v| !v.is_finite()) {
            return Err(SignalError::NonFinite);
        }
        Ok(Self { ri })
    }

    pub fn zeros(bins: usize, frames: usize) -> Self {
        Self { ri: Array3::zeros((2, bins, frames)) }
    }

    pub fn bins(&self) -> usize {
        self.ri.shape()[1]
    }

    pub fn frames(&self) -> usize {
        self.ri.shape()[2]
    }

    pub fn ri(&self) -> &Array3<T> {
        &self.ri
    }

    pub fn view(&self) -> ArrayView3<'_, T> {
        self.ri.view()
    }

    pub fn into_inner(self) -> Array3<T> {
        self.ri
    }

    /// Sum of |X|² over all bins and frames.
    pub fn power(&self) -> T {
        self.ri.iter().map(|&v| v * v).sum()
    }
}

struct Plan<T: Real> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    window: Vec<T>,
}

impl<T: Real> Plan<T> {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n), window: sqrt_hann(n) }
    }
}

fn reflect_pad<T: Real>(wave: &[T], pad: usize) -> Vec<T> {
    let n = wave.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    if n > pad {
        out.extend((1..=pad).rev().map(|i| wave[i]));
        out.extend_from_slice(wave);
        out.extend((0..pad).map(|i| wave[n - 2 - i]));
    } else {
        // too short to reflect; fall back to zeros
        out.resize(pad, T::zero());
        out.extend_from_slice(wave);
        out.resize(n + 2 * pad, T::zero());
    }
    out
}

/// Sum of squared synthesis windows at each padded sample.
fn window_envelope<T: Real>(window: &[T], hop: usize, frames: usize, padded_len: usize) -> Vec<T> {
    let mut env = vec![T::zero(); padded_len];
    for t in 0..frames {
        for (m, &w) in window.iter().enumerate() {
            if let Some(e) = env.get_mut(t * hop + m) {
                *e += w * w;
            }
        }
    }
    env
}

const ENVELOPE_FLOOR: f64 = 1e-10;

/// Centered (reflect-padded) sqrt-Hann STFT.
pub fn stft<T: Real>(wave: &[T], cfg: &StftConfig) -> Result<ComplexSpectrogram<T>, SignalError> {
    cfg.validate()?;
    if wave.is_empty() {
        return Err(SignalError::EmptyInput);
    }
    let n = cfg.n_fft;
    let bins = cfg.bins();
    let padded = reflect_pad(wave, cfg.pad());
    let frames = cfg.frames(wave.len());
    let plan = Plan::<T>::new(n);
    let mut ri = Array3::zeros((2, bins, frames));
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    for t in 0..frames {
        let start = t * cfg.hop;
        for m in 0..n {
            buf[m] = Complex::new(padded[start + m] * plan.window[m], T::zero());
        }
        plan.forward.process(&mut buf);
        for k in 0..bins {
            ri[[0, k, t]] = buf[k].re;
            ri[[1, k, t]] = buf[k].im;
        }
    }
    Ok(ComplexSpectrogram { ri })
}

fn check_shape<T: Real>(spec: ArrayView3<'_, T>, cfg: &StftConfig) -> Result<(), SignalError> {
    let s = spec.shape();
    if s[0] != 2 || s[1] != cfg.bins() || s[2] == 0 {
        return Err(SignalError::Shape { found: s.to_vec(), expected_bins: cfg.bins() });
    }
    Ok(())
}

/// Overlap-add inverse of [`stft`], trimmed or zero-padded to `length` samples.
pub fn istft<T: Real>(spec: ArrayView3<'_, T>, length: usize, cfg: &StftConfig) -> Result<Vec<T>, SignalError> {
    cfg.validate()?;
    check_shape(spec, cfg)?;
    let n = cfg.n_fft;
    let bins = cfg.bins();
    let frames = spec.shape()[2];
    let padded_len = (frames - 1) * cfg.hop + n;
    let plan = Plan::<T>::new(n);
    let env = window_envelope(&plan.window, cfg.hop, frames, padded_len);
    let scale = T::one() / T::from_usize_lossy(n);
    let mut acc = vec![T::zero(); padded_len];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    for t in 0..frames {
        // Hermitian extension; imaginary parts of DC and Nyquist are dropped
        buf[0] = Complex::new(spec[[0, 0, t]], T::zero());
        buf[n / 2] = Complex::new(spec[[0, bins - 1, t]], T::zero());
        for k in 1..bins - 1 {
            let z = Complex::new(spec[[0, k, t]], spec[[1, k, t]]);
            buf[k] = z;
            buf[n - k] = z.conj();
        }
        plan.inverse.process(&mut buf);
        let start = t * cfg.hop;
        for m in 0..n {
            acc[start + m] += buf[m].re * scale * plan.window[m];
        }
    }
    let floor = T::lit(ENVELOPE_FLOOR);
    let pad = cfg.pad();
    Ok((0..length)
        .map(|i| {
            let p = i + pad;
            if p < padded_len && env[p] > floor {
                acc[p] / env[p]
            } else {
                T::zero()
            }
        })
        .collect())
}

/// Adjoint of [`istft`] as a linear map from the spectrogram to the waveform:
/// returns `∂⟨g, istft(X)⟩/∂X` for an upstream waveform gradient `g`.
pub fn istft_adjoint<T: Real>(grad: &[T], frames: usize, cfg: &StftConfig) -> Result<Array3<T>, SignalError> {
    cfg.validate()?;
    if frames == 0 {
        return Err(SignalError::EmptyInput);
    }
    let n = cfg.n_fft;
    let bins = cfg.bins();
    let pad = cfg.pad();
    let padded_len = (frames - 1) * cfg.hop + n;
    let plan = Plan::<T>::new(n);
    let env = window_envelope(&plan.window, cfg.hop, frames, padded_len);
    let floor = T::lit(ENVELOPE_FLOOR);
    let mut g = vec![T::zero(); padded_len];
    for (i, &v) in grad.iter().enumerate() {
        let p = i + pad;
        if p < padded_len && env[p] > floor {
            g[p] = v / env[p];
        }
    }
    let inv_n = T::one() / T::from_usize_lossy(n);
    let two = T::lit(2.0);
    let mut out = Array3::zeros((2, bins, frames));
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    for t in 0..frames {
        let start = t * cfg.hop;
        for m in 0..n {
            buf[m] = Complex::new(g[start + m] * plan.window[m], T::zero());
        }
        plan.forward.process(&mut buf);
        for k in 0..bins {
            let weight = if k == 0 || k == bins - 1 { inv_n } else { two * inv_n };
            out[[0, k, t]] = buf[k].re * weight;
            out[[1, k, t]] = if k == 0 || k == bins - 1 { T::zero() } else { buf[k].im * weight };
        }
    }
    Ok(out)
}

impl<T: Real> ComplexSpectrogram<T> {
    /// Frequency-major view with the frame axis second: `2 × T × F`.
    pub fn time_major(&self) -> Array3<T> {
        self.ri.view().permuted_axes([0, 2, 1]).as_standard_layout().into_owned()
    }

    pub fn from_time_major(tf: Array3<T>) -> Result<Self, SignalError> {
        Self::new(tf.permuted_axes([0, 2, 1]).as_standard_layout().into_owned())
    }

    pub fn plane(&self, idx: usize) -> ndarray::ArrayView2<'_, T> {
        self.ri.index_axis(Axis(0), idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn five_seconds_gives_626_frames() {
        let spec = stft(&vec![0.0f32; 80_000], &StftConfig::default()).unwrap();
        assert_eq!(spec.ri().shape(), &[2, 129, 626]);
    }

    #[test]
    fn frame_count_formula_matches_enumeration() {
        let cfg = StftConfig::default();
        for len in [1usize, 127, 128, 129, 255, 256, 257, 1000, 80_000, 80_050] {
            // frames start at every hop while the full window fits in the padded signal
            let padded = len + cfg.n_fft;
            let brute = (0..).take_while(|t| t * cfg.hop + cfg.n_fft <= padded).count();
            assert_eq!(cfg.frames(len), brute, "len {len}");
        }
    }

    #[test]
    fn sine_peaks_at_expected_bin() {
        let wave: Vec<f64> =
            (0..16_000).map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / 16_000.0).sin()).collect();
        let spec = stft(&wave, &StftConfig::default()).unwrap();
        let t = 60;
        let mag: Vec<f64> = (0..129).map(|k| spec.ri()[[0, k, t]].hypot(spec.ri()[[1, k, t]])).collect();
        let peak = mag.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(peak, 16);
    }

    #[test]
    fn zeros_map_to_zeros() {
        let spec = stft(&vec![0.0f64; 4000], &StftConfig::default()).unwrap();
        assert!(spec.ri().iter().all(|&v| v == 0.0));
        let back = istft(spec.view(), 4000, &StftConfig::default()).unwrap();
        assert!(back.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn round_trip_is_exact_for_odd_lengths() {
        let cfg = StftConfig::default();
        for len in [300usize, 16_000, 16_037] {
            let x = noise(len, len as u64);
            let spec = stft(&x, &cfg).unwrap();
            let y = istft(spec.view(), len, &cfg).unwrap();
            let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "len {len}: {err}");
        }
    }

    #[test]
    fn squared_window_overlap_add_is_constant() {
        let w = sqrt_hann::<f64>(256);
        for n in 0..128 {
            let s = w[n] * w[n] + w[n + 128] * w[n + 128];
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn parseval_with_window_compensation() {
        let cfg = StftConfig::default();
        let mut x = noise(8192, 3);
        // zero edges so reflect padding adds no energy
        for v in x.iter_mut().take(cfg.n_fft) {
            *v = 0.0;
        }
        let n = x.len();
        for v in x.iter_mut().skip(n - cfg.n_fft) {
            *v = 0.0;
        }
        let spec = stft(&x, &cfg).unwrap();
        let bins = cfg.bins();
        let mut e_spec = 0.0;
        for t in 0..spec.frames() {
            for k in 0..bins {
                let w = if k == 0 || k == bins - 1 { 1.0 } else { 2.0 };
                let re = spec.ri()[[0, k, t]];
                let im = spec.ri()[[1, k, t]];
                e_spec += w * (re * re + im * im) / cfg.n_fft as f64;
            }
        }
        let e_wave: f64 = x.iter().map(|v| v * v).sum();
        assert!(((e_spec - e_wave) / e_wave).abs() < 1e-5);
    }

    #[test]
    fn adjoint_identity_holds() {
        // <g, istft(X)> == <istft_adjoint(g), X> for random X, g
        let cfg = StftConfig::with_bins(17);
        let len = 200;
        let frames = cfg.frames(len);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array3::from_shape_fn((2, cfg.bins(), frames), |_| rng.gen_range(-1.0..1.0));
        let g: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = istft(x.view(), len, &cfg).unwrap();
        let lhs: f64 = g.iter().zip(&y).map(|(a, b)| a * b).sum();
        let adj = istft_adjoint(&g, frames, &cfg).unwrap();
        let rhs: f64 = adj.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = StftConfig::default();
        assert!(matches!(stft::<f32>(&[], &cfg), Err(SignalError::EmptyInput)));
        let bad = Array3::<f32>::zeros((2, 100, 5));
        assert!(matches!(istft(bad.view(), 10, &cfg), Err(SignalError::Shape { .. })));
    }
}
