use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use rand::Rng;

use super::{CorpusError, CorpusManifest};
use crate::audio::{read_audio_16k, SAMPLE_RATE};
use crate::rng::rng_for;
use crate::Real;

/// Decoded 16 kHz utterances shared across threads.
#[derive(Debug, Default, Clone)]
pub struct AudioCache {
    inner: Arc<Mutex<HashMap<PathBuf, Arc<Vec<f32>>>>>,
}

impl AudioCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, path: &PathBuf) -> Result<Arc<Vec<f32>>, CorpusError> {
        if let Some(hit) = self.inner.lock().expect("audio cache poisoned").get(path) {
            return Ok(hit.clone());
        }
        let samples = Arc::new(read_audio_16k(path)?);
        self.inner.lock().expect("audio cache poisoned").insert(path.clone(), samples.clone());
        Ok(samples)
    }
}

/// Contiguous `length`-second excerpt of one of the speaker's utterances, chosen
/// uniformly under `seed`. Utterances shorter than the excerpt are looped.
pub fn draw_segment<T: Real>(
    manifest: &CorpusManifest,
    cache: &AudioCache,
    speaker_id: &str,
    length: f64,
    seed: u64,
) -> Result<Vec<T>, CorpusError> {
    if !(length > 0.0) {
        return Err(CorpusError::Length(length));
    }
    let utts: Vec<_> = manifest.utterances_of(speaker_id).collect();
    if utts.is_empty() {
        return Err(CorpusError::UnknownSpeaker(speaker_id.into()));
    }
    let mut rng = rng_for(seed, &[0x5345_474d]);
    let utt = utts[rng.gen_range(0..utts.len())];
    let audio = cache.get(&manifest.resolve(utt))?;
    let n = (length * SAMPLE_RATE as f64).round() as usize;
    let len = audio.len();
    if len == 0 {
        return Err(CorpusError::Empty(manifest.resolve(utt)));
    }
    let out = if len >= n {
        let start = rng.gen_range(0..=len - n);
        audio[start..start + n].iter().map(|&v| T::lit(v as f64)).collect()
    } else {
        let start = rng.gen_range(0..len);
        (0..n).map(|i| T::lit(audio[(start + i) % len] as f64)).collect()
    };
    Ok(out)
}
