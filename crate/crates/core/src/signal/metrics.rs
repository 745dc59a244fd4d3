use super::SignalError;
use crate::Real;

/// SI-SDR values are clamped to ±this many dB so perfect or silent estimates stay finite.
pub const SI_SDR_CLAMP_DB: f64 = 60.0;

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Scale-invariant signal-to-distortion ratio in dB.
///
/// The reference is rescaled by `α = ⟨estimate, reference⟩ / ‖reference‖²`; the
/// result is `10·log10(‖α·r‖² / ‖α·r − e‖²)` clamped to `[-60, 60]`.
pub fn si_sdr<T: Real>(estimate: &[T], reference: &[T]) -> Result<T, SignalError> {
    if estimate.len() != reference.len() {
        return Err(SignalError::LengthMismatch(estimate.len(), reference.len()));
    }
    if reference.is_empty() {
        return Err(SignalError::EmptyInput);
    }
    let ref_energy = dot(reference, reference);
    if ref_energy <= T::zero() {
        return Err(SignalError::ZeroReference);
    }
    let alpha = dot(estimate, reference) / ref_energy;
    let target = alpha * alpha * ref_energy;
    let residual: T = estimate
        .iter()
        .zip(reference)
        .map(|(&e, &r)| {
            let d = alpha * r - e;
            d * d
        })
        .sum();
    let clamp = T::lit(SI_SDR_CLAMP_DB);
    if target <= T::zero() {
        return Ok(-clamp);
    }
    if residual <= T::zero() {
        return Ok(clamp);
    }
    let db = T::lit(10.0) * (target / residual).log10();
    Ok(db.max(-clamp).min(clamp))
}

/// `si_sdr(estimate, reference) − si_sdr(mixture, reference)`.
pub fn si_sdr_improvement<T: Real>(estimate: &[T], mixture: &[T], reference: &[T]) -> Result<T, SignalError> {
    Ok(si_sdr(estimate, reference)? - si_sdr(mixture, reference)?)
}
