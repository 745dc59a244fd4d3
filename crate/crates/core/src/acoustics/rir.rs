use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::{distance, RoomScene};
use super::rt60::t20_from_curve;
use super::AcousticsError;
use crate::rng::derive_seed;
use crate::Real;

pub const SPEED_OF_SOUND: f64 = 343.0;

/// How wall absorption is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum AbsorptionModel {
    /// Invert Eyring's formula for the scene RT60.
    Eyring,
    /// Reflection coefficient whose image-method decay, averaged over arrival
    /// directions and fitted like `estimate_rt60`, matches the scene RT60.
    ImageDecay,
    /// Fixed energy absorption coefficient on all six surfaces.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RirConfig {
    pub fs: u32,
    /// Edge length of the uniform box each image source is jittered within.
    pub displacement: f64,
    /// Odd length of the windowed-sinc fractional delay kernel.
    pub sinc_taps: usize,
    pub absorption: AbsorptionModel,
    /// Cutoff of a causal second-order Butterworth high-pass applied to the
    /// response; 0 disables it. Removes the low-frequency build-up that the
    /// all-positive image gains otherwise accumulate in the late tail.
    pub highpass_hz: f64,
}

impl Default for RirConfig {
    fn default() -> Self {
        Self { fs: 16_000, displacement: 0.08, sinc_taps: 81, absorption: AbsorptionModel::ImageDecay, highpass_hz: 80.0 }
    }
}

/// Sampled room impulse response for one source of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse<T> {
    pub samples: Vec<T>,
    pub source_distance: f64,
    pub scene_ref: String,
    pub source_index: usize,
    pub fs: u32,
}

impl<T: Real> ImpulseResponse<T> {
    /// Sample index before which the response is identically zero.
    pub fn direct_arrival_floor(&self) -> usize {
        (self.source_distance / SPEED_OF_SOUND * self.fs as f64).floor() as usize
    }

    pub fn energy(&self) -> T {
        self.samples.iter().map(|&v| v * v).sum()
    }
}

/// Energy absorption coefficient that gives `rt60` under Eyring's formula.
pub fn eyring_absorption(volume: f64, surface: f64, rt60: f64) -> Result<f64, AcousticsError> {
    if !(rt60.is_finite() && rt60 > 0.0) {
        return Err(AcousticsError::InvalidScene(format!("rt60 must be positive, got {rt60}")));
    }
    let alpha = 1.0 - (-0.161 * volume / (surface * rt60)).exp();
    if alpha >= 1.0 {
        return Err(AcousticsError::InvalidScene(format!("rt60 {rt60} s needs absorption >= 1")));
    }
    Ok(alpha)
}

/// Energy absorption calibrated to the image model of a shoebox room.
///
/// An image in direction `u` at distance `c·t` has undergone about
/// `c·t·Σ|u_i|/L_i` reflections, so the reverberant energy envelope is
/// `E(t) = mean_u exp(−a·c·t·Σ|u_i|/L_i)` with `a = −ln(1 − α)`. The rate `a`
/// is bisected until the T20 fit of `E`, truncated at `rt60`, equals `rt60`.
/// Unlike Sabine or Eyring this accounts for the slower decay of directions
/// that graze the long walls of flat rooms.
pub fn image_decay_absorption(dims: [f64; 3], rt60: f64) -> Result<f64, AcousticsError> {
    if !(rt60.is_finite() && rt60 > 0.0) {
        return Err(AcousticsError::InvalidScene(format!("rt60 must be positive, got {rt60}")));
    }
    const DIRECTIONS: usize = 512;
    const STEPS: usize = 400;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let rates: Vec<f64> = (0..DIRECTIONS)
        .map(|i| {
            let z = 1.0 - (i as f64 + 0.5) / DIRECTIONS as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let u = [r * phi.cos(), r * phi.sin(), z];
            SPEED_OF_SOUND * (0..3).map(|k| u[k].abs() / dims[k]).sum::<f64>()
        })
        .collect();
    let dt = rt60 / STEPS as f64;
    let t20 = |a: f64| -> Result<f64, AcousticsError> {
        // backward integral of E from t to rt60, per direction in closed form
        let edc: Vec<f64> = (0..=STEPS)
            .map(|j| {
                let t = j as f64 * dt;
                rates.iter().map(|&g| ((-a * g * t).exp() - (-a * g * rt60).exp()) / (a * g)).sum::<f64>()
            })
            .collect();
        let db: Vec<f64> = edc.iter().map(|e| 10.0 * (e / edc[0]).log10()).collect();
        t20_from_curve(&db, dt)
    };
    // T20 falls as the rate grows; bisect in log space
    let (mut lo, mut hi) = (1e-4f64.ln(), 50f64.ln());
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if t20(mid.exp())? > rt60 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha = 1.0 - (-(0.5 * (lo + hi)).exp()).exp();
    if alpha >= 1.0 {
        return Err(AcousticsError::InvalidScene(format!("rt60 {rt60} s needs absorption >= 1")));
    }
    Ok(alpha)
}

struct AxisImage {
    offset: f64,
    reflections: i32,
}

/// Image positions along one axis, relative to the microphone.
fn axis_images(src: f64, mic: f64, len: f64, order: i32) -> Vec<AxisImage> {
    let mut out = Vec::with_capacity(2 * (2 * order as usize + 1));
    for n in -order..=order {
        for q in 0..=1 {
            let pos = (1 - 2 * q) as f64 * src + 2.0 * n as f64 * len;
            out.push(AxisImage { offset: pos - mic, reflections: (n - q).abs() + n.abs() });
        }
    }
    out
}

/// Renders the impulse response of `scene.source_positions[source_index]` with the
/// randomized image method.
///
/// Every image except the direct path is displaced by an independent uniform
/// offset in `[-d/2, d/2]` per axis. Each arrival is placed with a Hann-windowed
/// sinc, delayed by half the kernel so the response stays causal.
pub fn generate_rir<T: Real>(
    scene: &RoomScene,
    source_index: usize,
    cfg: &RirConfig,
) -> Result<ImpulseResponse<T>, AcousticsError> {
    if cfg.fs != 16_000 {
        return Err(AcousticsError::SampleRate(cfg.fs));
    }
    let count = scene.source_positions.len();
    if source_index >= count {
        return Err(AcousticsError::SourceIndex { index: source_index, count });
    }
    if cfg.displacement < 0.0 || cfg.sinc_taps % 2 == 0 || !(0.0..fs_half(cfg.fs)).contains(&cfg.highpass_hz) {
        return Err(AcousticsError::InvalidScene(
            "displacement must be >= 0, sinc_taps odd and highpass_hz below Nyquist".into(),
        ));
    }
    let alpha = match cfg.absorption {
        AbsorptionModel::Eyring => eyring_absorption(scene.volume(), scene.surface(), scene.rt60)?,
        AbsorptionModel::ImageDecay => image_decay_absorption(scene.dims, scene.rt60)?,
        AbsorptionModel::Fixed(a) if (0.0..=1.0).contains(&a) => a,
        AbsorptionModel::Fixed(a) => {
            return Err(AcousticsError::InvalidScene(format!("absorption {a} outside [0, 1]")));
        }
    };
    let beta = (1.0 - alpha).sqrt();
    let fs = cfg.fs as f64;
    let half = (cfg.sinc_taps / 2) as i64;
    let src = scene.source_positions[source_index];
    let mic = scene.mic_pos;
    let direct = distance(&src, &mic);

    let len = (scene.rt60 * fs).ceil() as usize + cfg.sinc_taps;
    // latest arrival whose kernel still fits in the buffer
    let max_delay = (len as i64 - 1 - 2 * half) as f64;
    let max_dist = max_delay / fs * SPEED_OF_SOUND;
    let min_dim = scene.dims.iter().cloned().fold(f64::INFINITY, f64::min);
    let order = (SPEED_OF_SOUND * scene.rt60 / min_dim).ceil() as i32 + 1;

    let xs = axis_images(src[0], mic[0], scene.dims[0], order);
    let ys = axis_images(src[1], mic[1], scene.dims[1], order);
    let zs = axis_images(src[2], mic[2], scene.dims[2], order);
    let slack = cfg.displacement;
    let reach = max_dist + slack;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(scene.seed, &[0x5249_4d00, source_index as u64]));
    let jitter = 0.5 * cfg.displacement;
    let mut h = vec![0.0f64; len];
    let taps = cfg.sinc_taps as f64;
    for x in &xs {
        let dx2 = x.offset * x.offset;
        if dx2.sqrt() - slack > reach {
            continue;
        }
        for y in &ys {
            let dxy2 = dx2 + y.offset * y.offset;
            if dxy2.sqrt() - slack > reach {
                continue;
            }
            for z in &zs {
                let d2 = dxy2 + z.offset * z.offset;
                if d2.sqrt() - slack > reach {
                    continue;
                }
                let refl = x.reflections + y.reflections + z.reflections;
                let d = if refl == 0 || jitter == 0.0 {
                    d2.sqrt()
                } else {
                    let ox = x.offset + rng.gen_range(-jitter..=jitter);
                    let oy = y.offset + rng.gen_range(-jitter..=jitter);
                    let oz = z.offset + rng.gen_range(-jitter..=jitter);
                    (ox * ox + oy * oy + oz * oz).sqrt().max(direct)
                };
                if d > max_dist {
                    continue;
                }
                let gain = beta.powi(refl) / (4.0 * std::f64::consts::PI * d);
                if gain == 0.0 {
                    continue;
                }
                add_fractional_impulse(&mut h, d / SPEED_OF_SOUND * fs + half as f64, gain, half, taps);
            }
        }
    }
    if cfg.highpass_hz > 0.0 {
        h = highpass(&h, fs, cfg.highpass_hz);
    }
    Ok(ImpulseResponse {
        samples: h.into_iter().map(T::lit).collect(),
        source_distance: direct,
        scene_ref: scene.id(),
        source_index,
        fs: cfg.fs,
    })
}

fn fs_half(fs: u32) -> f64 {
    fs as f64 / 2.0
}

/// Causal RBJ biquad high-pass with Q = 1/√2.
fn highpass(x: &[f64], fs: f64, cutoff: f64) -> Vec<f64> {
    let w0 = 2.0 * std::f64::consts::PI * cutoff / fs;
    let alpha = w0.sin() * std::f64::consts::FRAC_1_SQRT_2;
    let cw = w0.cos();
    let a0 = 1.0 + alpha;
    let b0 = (1.0 + cw) / 2.0 / a0;
    let b1 = -(1.0 + cw) / a0;
    let a1 = -2.0 * cw / a0;
    let a2 = (1.0 - alpha) / a0;
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    x.iter()
        .map(|&v| {
            let y = b0 * v + b1 * x1 + b0 * x2 - a1 * y1 - a2 * y2;
            (x2, x1, y2, y1) = (x1, v, y1, y);
            y
        })
        .collect()
}

/// Adds `gain · w(n − τ)·sinc(n − τ)` for the `2·half + 1` samples around `τ`.
fn add_fractional_impulse(h: &mut [f64], tau: f64, gain: f64, half: i64, taps: f64) {
    use std::f64::consts::PI;
    let center = tau.round() as i64;
    let frac = tau - center as f64;
    // sin(π(m − frac)) = (−1)^m · sin(−π·frac)
    let s = (-PI * frac).sin();
    // Hann window cos(2πx/taps) advanced by rotation
    let step = 2.0 * PI / taps;
    let (sin_step, cos_step) = step.sin_cos();
    let x0 = (-half) as f64 - frac;
    let (mut sw, mut cw) = (step * x0).sin_cos();
    for m in -half..=half {
        let n = center + m;
        let x = m as f64 - frac;
        let sinc = if x.abs() < 1e-12 {
            1.0
        } else {
            let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            sign * s / (PI * x)
        };
        let w = 0.5 * (1.0 + cw);
        if n >= 0 && (n as usize) < h.len() {
            h[n as usize] += gain * w * sinc;
        }
        let next_c = cw * cos_step - sw * sin_step;
        sw = sw * cos_step + cw * sin_step;
        cw = next_c;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustics::{estimate_rt60, sample_room_scene, Regime};

    fn free_field() -> RirConfig {
        RirConfig { absorption: AbsorptionModel::Fixed(1.0), highpass_hz: 0.0, ..RirConfig::default() }
    }

    #[test]
    fn fractional_kernel_matches_direct_formula() {
        let mut h = vec![0.0; 200];
        let tau = 90.37;
        add_fractional_impulse(&mut h, tau, 1.0, 40, 81.0);
        for (n, &v) in h.iter().enumerate() {
            let x = n as f64 - tau;
            let expect = if x.abs() < 40.5 && (n as i64 - 90).abs() <= 40 {
                let w = 0.5 * (1.0 + (2.0 * std::f64::consts::PI * x / 81.0).cos());
                w * (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
            } else {
                0.0
            };
            assert!((v - expect).abs() < 1e-9, "n={n}: {v} vs {expect}");
        }
    }

    #[test]
    fn free_field_is_single_delayed_impulse() {
        let scene = sample_room_scene(3, Regime::Normal).unwrap();
        let ir = generate_rir::<f64>(&scene, 2, &free_field()).unwrap();
        let d = scene.source_distance(2);
        let tau = d / SPEED_OF_SOUND * 16_000.0 + 40.0;
        // the kernel sums to ~1, so total mass equals the spherical-spreading gain
        let mass: f64 = ir.samples.iter().sum();
        assert!((mass - 1.0 / (4.0 * std::f64::consts::PI * d)).abs() < 1e-3 * mass);
        let support: Vec<usize> = ir.samples.iter().enumerate().filter(|(_, v)| v.abs() > 0.0).map(|(i, _)| i).collect();
        assert!(*support.first().unwrap() as f64 >= tau - 41.0);
        assert!(*support.last().unwrap() as f64 <= tau + 41.0);
    }

    #[test]
    fn causal_and_long_enough() {
        for seed in 0..20 {
            let scene = sample_room_scene(seed, Regime::Normal).unwrap();
            for k in 0..5 {
                let ir = generate_rir::<f32>(&scene, k, &RirConfig::default()).unwrap();
                assert!(ir.samples.len() >= (scene.rt60 * 16_000.0).ceil() as usize);
                let first = ir.samples.iter().position(|v| *v != 0.0).unwrap();
                assert!(first >= ir.direct_arrival_floor());
            }
        }
    }

    #[test]
    fn deterministic_per_scene_and_source() {
        let scene = sample_room_scene(11, Regime::Normal).unwrap();
        let a = generate_rir::<f32>(&scene, 1, &RirConfig::default()).unwrap();
        let b = generate_rir::<f32>(&scene, 1, &RirConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn estimated_rt60_tracks_scene() {
        let mut scene = sample_room_scene(5, Regime::Normal).unwrap();
        scene.rt60 = 0.3;
        let ir = generate_rir::<f64>(&scene, 3, &RirConfig::default()).unwrap();
        let est = estimate_rt60(&ir.samples, 16_000).unwrap();
        assert!((est - 0.3).abs() <= 0.06, "{est}");
    }

    #[test]
    fn rt60_point_two_within_twenty_percent() {
        for seed in 0..4 {
            let mut scene = sample_room_scene(seed, Regime::Normal).unwrap();
            scene.rt60 = 0.2;
            let ir = generate_rir::<f64>(&scene, 2, &RirConfig::default()).unwrap();
            let est = estimate_rt60(&ir.samples, 16_000).unwrap();
            assert!((0.16..=0.24).contains(&est), "seed {seed}: {est}");
        }
    }

    #[test]
    fn image_decay_absorption_is_monotone_and_exceeds_eyring() {
        let dims = [5.0, 6.0, 2.5];
        let v = 75.0;
        let s = 2.0 * (30.0 + 12.5 + 15.0);
        let mut last = 1.0;
        for rt in [0.1, 0.2, 0.3, 0.5] {
            let a = image_decay_absorption(dims, rt).unwrap();
            assert!(a < last);
            // grazing directions decay slowly, so more absorption is needed than a diffuse field predicts
            assert!(a > eyring_absorption(v, s, rt).unwrap());
            last = a;
        }
    }

    #[test]
    fn highpass_blocks_dc_and_passes_speech_band() {
        let dc = highpass(&vec![1.0; 16_000], 16_000.0, 80.0);
        assert!(dc[15_999].abs() < 1e-6);
        let tone: Vec<f64> = (0..16_000).map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / 16_000.0).sin()).collect();
        let out = highpass(&tone, 16_000.0, 80.0);
        let rms = |x: &[f64]| (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
        assert!((rms(&out[8000..]) / rms(&tone[8000..]) - 1.0).abs() < 0.01);
    }

    #[test]
    fn rejects_unsupported_inputs() {
        let scene = sample_room_scene(1, Regime::Normal).unwrap();
        let cfg = RirConfig { fs: 44_100, ..RirConfig::default() };
        assert!(matches!(generate_rir::<f32>(&scene, 0, &cfg), Err(AcousticsError::SampleRate(44_100))));
        assert!(matches!(
            generate_rir::<f32>(&scene, 9, &RirConfig::default()),
            Err(AcousticsError::SourceIndex { .. })
        ));
        let mut dead = scene.clone();
        dead.rt60 = 0.0;
        assert!(matches!(generate_rir::<f32>(&dead, 0, &RirConfig::default()), Err(AcousticsError::InvalidScene(_))));
    }
}
