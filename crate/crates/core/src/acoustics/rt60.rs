use super::AcousticsError;
use crate::Real;

/// Schroeder backward-integrated energy decay curve, normalised to 0 dB at the start.
pub fn schroeder_curve_db<T: Real>(rir: &[T]) -> Vec<f64> {
    let mut acc = 0.0f64;
    let mut edc: Vec<f64> = rir
        .iter()
        .rev()
        .map(|&v| {
            let v = v.to_f64_lossy();
            acc += v * v;
            acc
        })
        .collect();
    edc.reverse();
    let total = edc.first().copied().unwrap_or(0.0);
    edc.iter().map(|&e| 10.0 * (e / total).log10()).collect()
}

/// T20 estimate: least-squares line through the decay curve between −5 and −25 dB,
/// extrapolated to −60 dB.
pub fn estimate_rt60<T: Real>(rir: &[T], fs: u32) -> Result<f64, AcousticsError> {
    if rir.is_empty() {
        return Err(AcousticsError::Estimation("empty response"));
    }
    if rir.iter().all(|v| *v == T::zero()) {
        return Err(AcousticsError::Estimation("zero-energy response"));
    }
    let edc = schroeder_curve_db(rir);
    t20_from_curve(&edc, 1.0 / fs as f64)
}

/// Least-squares T20 fit of a decay curve sampled every `dt` seconds.
pub(crate) fn t20_from_curve(edc: &[f64], dt: f64) -> Result<f64, AcousticsError> {
    let start = edc.iter().position(|&v| v <= -5.0).ok_or(AcousticsError::Estimation("decay never reaches -5 dB"))?;
    let end = edc.iter().position(|&v| v <= -25.0).ok_or(AcousticsError::Estimation("decay never reaches -25 dB"))?;
    let span: Vec<(f64, f64)> = (start..end).filter(|&i| edc[i].is_finite()).map(|i| (i as f64 * dt, edc[i])).collect();
    if span.len() < 2 {
        return Err(AcousticsError::Estimation("no decay span between -5 and -25 dB"));
    }
    let n = span.len() as f64;
    let mt = span.iter().map(|p| p.0).sum::<f64>() / n;
    let me = span.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = span.iter().map(|(t, e)| (t - mt) * (e - me)).sum();
    let var: f64 = span.iter().map(|(t, _)| (t - mt) * (t - mt)).sum();
    let slope = cov / var;
    if !(slope < 0.0) {
        return Err(AcousticsError::Estimation("non-decaying energy curve"));
    }
    Ok(-60.0 / slope)
}
