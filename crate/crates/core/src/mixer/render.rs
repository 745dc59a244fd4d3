use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::MixerError;
use crate::acoustics::ImpulseResponse;
use crate::Real;

/// RMS level in dBFS.
pub fn rms_db<T: Real>(wave: &[T]) -> f64 {
    let ms = wave.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>() / wave.len().max(1) as f64;
    10.0 * ms.log10()
}

/// Scaled copy whose RMS equals `target_db` dBFS.
pub fn set_rms<T: Real>(wave: &[T], target_db: f64) -> Result<Vec<T>, MixerError> {
    let current = rms_db(wave);
    if !current.is_finite() {
        return Err(MixerError::DegenerateSource);
    }
    let gain = T::lit(10f64.powf((target_db - current) / 20.0));
    Ok(wave.iter().map(|&v| v * gain).collect())
}

/// Linear convolution of `a` and `b`, truncated to `out_len` samples. Computed in
/// double precision regardless of `T`.
pub fn fft_convolve<T: Real>(a: &[T], b: &[T], out_len: usize) -> Vec<T> {
    // leading zeros are skipped so silent prefixes stay exactly zero
    let lead_a = a.iter().position(|v| *v != T::zero());
    let lead_b = b.iter().position(|v| *v != T::zero());
    let (Some(la), Some(lb)) = (lead_a, lead_b) else {
        return vec![T::zero(); out_len];
    };
    let shift = la + lb;
    if shift >= out_len {
        return vec![T::zero(); out_len];
    }
    let mut out = vec![T::zero(); shift];
    out.extend(convolve_dense(&a[la..], &b[lb..], out_len - shift));
    out
}

fn convolve_dense<T: Real>(a: &[T], b: &[T], out_len: usize) -> Vec<T> {
    let full = a.len() + b.len() - 1;
    let n = full.min(out_len.max(1)).max(1);
    // only the first `n` outputs are needed, so circular wrap beyond n is harmless
    let size = (a.len().min(n) + b.len().min(n)).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let load = |x: &[T]| {
        let mut buf = vec![Complex::new(0.0, 0.0); size];
        for (slot, v) in buf.iter_mut().zip(x.iter().take(n)) {
            slot.re = v.to_f64_lossy();
        }
        buf
    };
    let mut fa = load(a);
    let mut fb = load(b);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    let mut out: Vec<T> = fa.iter().take(n.min(full)).map(|z| T::lit(z.re * scale)).collect();
    out.resize(out_len, T::zero());
    out
}

/// Reverberant image of a dry source: `dry ⋆ rir`, truncated to the dry length.
pub fn render_source<T: Real>(dry: &[T], rir: &ImpulseResponse<T>) -> Result<Vec<T>, MixerError> {
    if rir.samples.is_empty() {
        return Err(MixerError::EmptyRir);
    }
    Ok(fft_convolve(dry, &rir.samples, dry.len()))
}
