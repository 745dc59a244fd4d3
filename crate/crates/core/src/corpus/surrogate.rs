//! Synthetic stand-in corpus: formant-synthesised "speakers" written in a
//! LibriSpeech-like `speaker/chapter/utterance.wav` tree.
//!
//! Each speaker has a fixed pitch range, vocal-tract scale, spectral tilt and
//! speaking rate, so utterances of one speaker share a voice print.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::audio::{write_wav, SAMPLE_RATE};
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateSpec {
    pub speakers: usize,
    pub utterances_per_speaker: usize,
    pub utterance_seconds: [f64; 2],
    /// Added to speaker numbers so partitions get disjoint identities.
    pub id_offset: usize,
    pub seed: u64,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        Self { speakers: 40, utterances_per_speaker: 4, utterance_seconds: [4.0, 8.0], id_offset: 0, seed: 0 }
    }
}

/// Voice parameters of one synthetic speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct Voice {
    pub f0: f64,
    pub formant_scale: f64,
    /// One-pole low-pass coefficient applied to the glottal source.
    pub tilt: f64,
    pub syllables_per_second: f64,
    pub breathiness: f64,
}

impl Voice {
    pub fn sample(rng: &mut ChaCha8Rng) -> Self {
        let female = rng.gen_bool(0.5);
        let (f0, scale) = if female {
            (rng.gen_range(165.0..255.0), rng.gen_range(1.05..1.22))
        } else {
            (rng.gen_range(85.0..155.0), rng.gen_range(0.85..1.02))
        };
        Self {
            f0,
            formant_scale: scale,
            tilt: rng.gen_range(0.88..0.97),
            syllables_per_second: rng.gen_range(3.0..6.0),
            breathiness: rng.gen_range(0.0..0.15),
        }
    }
}

const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [660.0, 1720.0, 2410.0],
];
const BANDWIDTHS: [f64; 3] = [70.0, 100.0, 140.0];

/// Klatt-style two-pole resonator with unity gain at DC.
#[derive(Default, Clone, Copy)]
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn step(&mut self, x: f64, freq: f64, bw: f64) -> f64 {
        let fs = SAMPLE_RATE as f64;
        let c = -(-2.0 * std::f64::consts::PI * bw / fs).exp();
        let b = 2.0 * (-std::f64::consts::PI * bw / fs).exp() * (2.0 * std::f64::consts::PI * freq / fs).cos();
        let a = 1.0 - b - c;
        let y = a * x + b * self.y1 + c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

#[derive(Clone, Copy)]
enum Segment {
    Vowel { formants: [f64; 3], len: usize },
    Fricative { center: f64, len: usize },
    Pause { len: usize },
}

/// Renders `seconds` of speech-like audio for `voice`, normalised to −25 dBFS RMS.
pub fn synthesize(voice: &Voice, seconds: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let fs = SAMPLE_RATE as f64;
    let total = (seconds * fs) as usize;
    let mut plan = Vec::new();
    let mut planned = 0;
    while planned < total {
        let syllables = rng.gen_range(1..=4);
        for _ in 0..syllables {
            if rng.gen_bool(0.6) {
                let len = (rng.gen_range(0.03..0.08) * fs) as usize;
                plan.push(Segment::Fricative { center: rng.gen_range(2500.0..6000.0) * voice.formant_scale, len });
                planned += len;
            }
            let v = VOWELS[rng.gen_range(0..VOWELS.len())];
            let len = (rng.gen_range(0.7..1.3) / voice.syllables_per_second * fs) as usize;
            plan.push(Segment::Vowel { formants: v.map(|f| f * voice.formant_scale), len });
            planned += len;
        }
        let len = (rng.gen_range(0.06..0.3) * fs) as usize;
        plan.push(Segment::Pause { len });
        planned += len;
    }

    let mut out = Vec::with_capacity(planned);
    let mut res = [Resonator::default(); 3];
    let mut fric = Resonator::default();
    let mut formants = VOWELS[0].map(|f| f * voice.formant_scale);
    let mut phase = 0.0f64;
    let mut tilt_state = 0.0f64;
    let glide = 1.0 - (-1.0 / (0.025 * fs)).exp();
    let contour_rate = rng.gen_range(0.5..2.0);
    let contour_depth = rng.gen_range(0.05..0.15);
    for seg in plan {
        match seg {
            Segment::Vowel { formants: goal, len } => {
                for i in 0..len {
                    let n = out.len() as f64 / fs;
                    for k in 0..3 {
                        formants[k] += glide * (goal[k] - formants[k]);
                    }
                    let f0 = voice.f0
                        * (1.0 + contour_depth * (2.0 * std::f64::consts::PI * contour_rate * n).sin())
                        * (1.0 + 0.01 * rng.gen_range(-1.0..1.0));
                    phase += f0 / fs;
                    let pulse = if phase >= 1.0 {
                        phase -= 1.0;
                        1.0
                    } else {
                        0.0
                    };
                    let source = pulse + voice.breathiness * rng.gen_range(-0.1..0.1);
                    tilt_state = (1.0 - voice.tilt) * source + voice.tilt * tilt_state;
                    let mut y = tilt_state;
                    for k in 0..3 {
                        y = res[k].step(y, formants[k], BANDWIDTHS[k]);
                    }
                    // raised-cosine syllable envelope
                    let env = (std::f64::consts::PI * (i as f64 + 0.5) / len as f64).sin().powf(0.6);
                    out.push(y * env);
                }
            }
            Segment::Fricative { center, len } => {
                for i in 0..len {
                    let noise = rng.gen_range(-1.0..1.0);
                    let env = (std::f64::consts::PI * (i as f64 + 0.5) / len as f64).sin();
                    out.push(0.05 * env * (noise - fric.step(noise, center, 1500.0)));
                }
            }
            Segment::Pause { len } => out.extend(std::iter::repeat(0.0).take(len)),
        }
    }
    out.truncate(total);
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / out.len().max(1) as f64).sqrt().max(1e-12);
    let gain = 10f64.powf(-25.0 / 20.0) / rms;
    // faint recording noise floor around −75 dBFS
    out.iter().map(|v| (v * gain + 10f64.powf(-75.0 / 20.0) * rng.gen_range(-1.7..1.7)) as f32).collect()
}

pub fn speaker_id(number: usize) -> String {
    format!("{:04}", number)
}

/// Writes the corpus to `root` and returns the number of files written.
pub fn write_surrogate_corpus(root: &Path, spec: &SurrogateSpec) -> Result<usize, CorpusError> {
    let mut written = 0;
    for s in 0..spec.speakers {
        let number = spec.id_offset + s;
        let spk = speaker_id(number);
        let mut voice_rng = rng_for(spec.seed, &[0x564f_4943, number as u64]);
        let voice = Voice::sample(&mut voice_rng);
        let dir = root.join(&spk).join("0001");
        fs::create_dir_all(&dir).map_err(|source| CorpusError::Io { path: dir.clone(), source })?;
        for u in 0..spec.utterances_per_speaker {
            let mut rng = rng_for(spec.seed, &[0x5554_5400, number as u64, u as u64]);
            let secs = rng.gen_range(spec.utterance_seconds[0]..=spec.utterance_seconds[1]);
            let audio = synthesize(&voice, secs, &mut rng);
            write_wav(&dir.join(format!("{spk}-0001-{u:04}.wav")), &audio, SAMPLE_RATE)?;
            written += 1;
        }
    }
    Ok(written)
}
