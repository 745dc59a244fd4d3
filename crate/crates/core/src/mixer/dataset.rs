use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mixture::{make_mixture, MixtureSample, SceneRirs, StemRole};
use super::{MixerError, ScenarioConfig};
use crate::acoustics::Regime;
use crate::audio::{read_wav_as, write_wav, SAMPLE_RATE};
use crate::corpus::{AudioCache, CorpusManifest};
use crate::rng::derive_seed;
use crate::Real;

pub const MANIFEST_FILE: &str = "dataset.jsonl";

/// One line of a dataset manifest. Paths are relative to the dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub sample_id: String,
    pub mixture_path: String,
    pub target_path: String,
    pub stem_paths: Vec<String>,
    pub stem_roles: Vec<StemRole>,
    pub speaker_ids: Vec<String>,
    pub target_speaker_label: usize,
    pub scene_id: String,
    pub n_speakers: usize,
    pub intruded: bool,
    pub regime: Regime,
    pub seed: u64,
    pub gain: f64,
    pub intruder_onset: Option<usize>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MixerError + '_ {
    move |source| MixerError::Io { path: path.to_path_buf(), source }
}

/// Renders `count` samples into `out`, cycling through `scenes`. Sample `i` uses
/// scene `i mod len` and seed `derive_seed(seed, [i])`.
pub fn build_dataset(
    scenes: &[SceneRirs<f32>],
    manifest: &CorpusManifest,
    cfg: &ScenarioConfig,
    count: usize,
    seed: u64,
    out: &Path,
) -> Result<Vec<DatasetEntry>, MixerError> {
    if scenes.is_empty() {
        return Err(MixerError::Config("no scenes".into()));
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let cache = AudioCache::new();
    let entries: Vec<DatasetEntry> = (0..count)
        .into_par_iter()
        .map(|i| {
            let sample_seed = derive_seed(seed, &[i as u64]);
            let s = make_mixture(&scenes[i % scenes.len()], manifest, &cache, cfg, sample_seed)?;
            let id = format!("sample_{i:06}");
            let dir = out.join(&id);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            write_wav(&dir.join("mixture.wav"), &s.mixture, SAMPLE_RATE)?;
            let mut stem_paths = Vec::with_capacity(s.stems.len());
            for (k, stem) in s.stems.iter().enumerate() {
                let name = format!("stem{k}.wav");
                write_wav(&dir.join(&name), stem, SAMPLE_RATE)?;
                stem_paths.push(format!("{id}/{name}"));
            }
            Ok(DatasetEntry {
                mixture_path: format!("{id}/mixture.wav"),
                // the target is stem 0; pointing at it avoids a duplicate file
                target_path: stem_paths[0].clone(),
                stem_paths,
                stem_roles: s.roles,
                speaker_ids: s.speaker_ids,
                target_speaker_label: s.target_speaker_label,
                scene_id: s.scene_id,
                n_speakers: cfg.n_speakers,
                intruded: cfg.intruded,
                regime: cfg.regime,
                seed: sample_seed,
                gain: s.gain,
                intruder_onset: s.intruder_onset,
                sample_id: id,
            })
        })
        .collect::<Result<_, MixerError>>()?;
    let path = out.join(MANIFEST_FILE);
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    for e in &entries {
        let line = serde_json::to_string(e).map_err(|source| MixerError::Json { path: path.clone(), source })?;
        writeln!(f, "{line}").map_err(io_err(&path))?;
    }
    Ok(entries)
}

pub fn read_dataset(dir: &Path) -> Result<Vec<DatasetEntry>, MixerError> {
    let path = dir.join(MANIFEST_FILE);
    let f = fs::File::open(&path).map_err(io_err(&path))?;
    let mut entries = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(io_err(&path))?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(&line).map_err(|source| MixerError::Json { path: path.clone(), source })?);
    }
    Ok(entries)
}

/// Decodes a stored sample. `scenario` keeps the recorded speaker count, regime
/// and intrusion flag; the remaining fields take their defaults.
pub fn load_sample<T: Real>(dir: &Path, entry: &DatasetEntry) -> Result<MixtureSample<T>, MixerError> {
    let mixture: Vec<T> = read_wav_as(&dir.join(&entry.mixture_path))?;
    let stems = entry
        .stem_paths
        .iter()
        .map(|p| read_wav_as(&dir.join(p)))
        .collect::<Result<Vec<Vec<T>>, _>>()?;
    let target = read_wav_as(&dir.join(&entry.target_path))?;
    let scenario = ScenarioConfig {
        n_speakers: entry.n_speakers,
        regime: entry.regime,
        intruded: entry.intruded,
        mixture_length: mixture.len() as f64 / SAMPLE_RATE as f64,
        ..ScenarioConfig::default()
    };
    Ok(MixtureSample {
        mixture,
        target,
        stems,
        roles: entry.stem_roles.clone(),
        speaker_ids: entry.speaker_ids.clone(),
        source_indices: Vec::new(),
        target_speaker_label: entry.target_speaker_label,
        scene_id: entry.scene_id.clone(),
        scenario,
        seed: entry.seed,
        gain: entry.gain,
        intruder_onset: entry.intruder_onset,
    })
}
