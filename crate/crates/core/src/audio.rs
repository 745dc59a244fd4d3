//! Mono audio file I/O and sample-rate conversion.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::Real;

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("{path}: {msg}")]
    Decode { path: PathBuf, msg: String },
    #[error("{path}: unsupported audio format")]
    Format { path: PathBuf },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Decoded mono signal with its native sample rate.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

fn decode_err(path: &Path, msg: impl ToString) -> AudioError {
    AudioError::Decode { path: path.to_path_buf(), msg: msg.to_string() }
}

fn read_wav(path: &Path) -> Result<Decoded, AudioError> {
    let reader = hound::WavReader::open(path).map_err(|e| decode_err(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => {
            reader.into_samples::<f32>().collect::<Result<_, _>>().map_err(|e| decode_err(path, e))?
        }
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<Result<_, _>>()
                .map_err(|e| decode_err(path, e))?
        }
    };
    Ok(Decoded { samples: downmix(&interleaved, channels), sample_rate: spec.sample_rate })
}

fn read_flac(path: &Path) -> Result<Decoded, AudioError> {
    let mut reader = claxon::FlacReader::open(path).map_err(|e| decode_err(path, e))?;
    let info = reader.streaminfo();
    let channels = info.channels as usize;
    let scale = 1.0 / (1u64 << (info.bits_per_sample - 1)) as f32;
    let interleaved: Vec<f32> = reader
        .samples()
        .map(|s| s.map(|v| v as f32 * scale))
        .collect::<Result<_, _>>()
        .map_err(|e| decode_err(path, e))?;
    Ok(Decoded { samples: downmix(&interleaved, channels), sample_rate: info.sample_rate })
}

fn downmix(interleaved: &[f32], channels: usize) -> Vec<f32> {
    if channels == 1 {
        return interleaved.to_vec();
    }
    interleaved.chunks_exact(channels).map(|f| f.iter().sum::<f32>() / channels as f32).collect()
}

pub fn is_audio_path(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("wav") | Some("flac")
    )
}

/// Decodes a WAV or FLAC file to mono at its native rate.
pub fn read_audio(path: &Path) -> Result<Decoded, AudioError> {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
        Some("wav") => read_wav(path),
        Some("flac") => read_flac(path),
        _ => Err(AudioError::Format { path: path.to_path_buf() }),
    }
}

/// Decodes and converts to 16 kHz.
pub fn read_audio_16k(path: &Path) -> Result<Vec<f32>, AudioError> {
    let d = read_audio(path)?;
    if d.sample_rate == SAMPLE_RATE {
        Ok(d.samples)
    } else {
        Ok(resample(&d.samples, d.sample_rate, SAMPLE_RATE))
    }
}

/// Writes 32-bit float mono WAV.
pub fn write_wav<T: Real>(path: &Path, samples: &[T], sample_rate: u32) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let io = |e: hound::Error| match e {
        hound::Error::IoError(source) => AudioError::Io { path: path.to_path_buf(), source },
        other => decode_err(path, other),
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(io)?;
    for &s in samples {
        w.write_sample(s.to_f32().unwrap_or(0.0)).map_err(io)?;
    }
    w.finalize().map_err(io)
}

/// Reads a WAV written by [`write_wav`] (or any WAV) as 16 kHz samples of type `T`.
pub fn read_wav_as<T: Real>(path: &Path) -> Result<Vec<T>, AudioError> {
    Ok(read_audio_16k(path)?.into_iter().map(|v| T::lit(v as f64)).collect())
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Rational polyphase resampler with a Hann-windowed sinc low-pass.
///
/// Only the phases needed for each output sample are evaluated.
pub fn resample(input: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to || input.is_empty() {
        return input.to_vec();
    }
    let g = gcd(from as u64, to as u64);
    let up = (to as u64 / g) as usize;
    let down = (from as u64 / g) as usize;
    // cutoff relative to the upsampled rate
    let cutoff = 0.5 / up.max(down) as f64 * 0.95;
    let zeros = 16usize;
    let half = (zeros as f64 / cutoff / 2.0).ceil() as usize;
    let proto: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let x = i as f64 - half as f64;
            let w = 0.5 * (1.0 + (std::f64::consts::PI * x / (half as f64 + 1.0)).cos());
            let arg = 2.0 * cutoff * x;
            let sinc = if arg == 0.0 { 1.0 } else { (std::f64::consts::PI * arg).sin() / (std::f64::consts::PI * arg) };
            2.0 * cutoff * sinc * w * up as f64
        })
        .collect();
    let out_len = (input.len() as u64 * up as u64).div_ceil(down as u64) as usize;
    (0..out_len)
        .map(|m| {
            // output m sits at index m·down of the zero-stuffed signal
            let pos = m * down;
            let lo = pos.saturating_sub(half);
            let mut u = lo.div_ceil(up) * up;
            let mut acc = 0.0f64;
            while u <= pos + half {
                let n = u / up;
                if n >= input.len() {
                    break;
                }
                // tap offset pos − u in [−half, half]
                acc += proto[half + pos - u] * input[n] as f64;
                u += up;
            }
            acc as f32
        })
        .collect()
}
