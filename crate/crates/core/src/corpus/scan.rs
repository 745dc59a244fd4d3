use std::path::{Path, PathBuf};

use rayon::prelude::*;
use walkdir::WalkDir;

use super::{CorpusError, CorpusManifest, Partition, UtteranceRecord};
use crate::audio::{is_audio_path, read_audio_16k, SAMPLE_RATE};

#[derive(Debug, Clone)]
pub struct ScanOptions {
    /// Directory level below the root that names the speaker (1 = `root/<speaker>/…`).
    pub speaker_depth: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { speaker_depth: 1 }
    }
}

/// A file that was found but could not be ingested.
#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub path: PathBuf,
    pub reason: String,
}

fn speaker_of(rel: &Path, depth: usize) -> Option<String> {
    let comps: Vec<_> = rel.components().collect();
    // the speaker level must be a directory, not the file itself
    if depth == 0 || comps.len() <= depth {
        return None;
    }
    comps[depth - 1].as_os_str().to_str().map(str::to_owned)
}

/// Walks `root`, decodes every WAV/FLAC file (resampling to 16 kHz) and builds a
/// manifest ordered by path. Undecodable files go to the skip report.
pub fn scan_corpus(
    root: &Path,
    partition: Partition,
    opts: &ScanOptions,
) -> Result<(CorpusManifest, Vec<Skipped>), CorpusError> {
    let mut files: Vec<PathBuf> = WalkDir::new(root)
        .follow_links(true)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && is_audio_path(e.path()))
        .map(|e| e.into_path())
        .collect();
    files.sort();
    let results: Vec<Result<UtteranceRecord, Skipped>> = files
        .par_iter()
        .map(|path| {
            let rel = path.strip_prefix(root).unwrap_or(path).to_path_buf();
            let skip = |reason: String| Skipped { path: path.clone(), reason };
            let speaker_id = speaker_of(&rel, opts.speaker_depth)
                .ok_or_else(|| skip(format!("no speaker directory at depth {}", opts.speaker_depth)))?;
            let samples = read_audio_16k(path).map_err(|e| skip(e.to_string()))?;
            if samples.is_empty() {
                return Err(skip("zero-length audio".into()));
            }
            Ok(UtteranceRecord {
                path: rel,
                speaker_id,
                duration: samples.len() as f64 / SAMPLE_RATE as f64,
                sample_rate: SAMPLE_RATE,
            })
        })
        .collect();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(s) => skipped.push(s),
        }
    }
    if records.is_empty() {
        return Err(CorpusError::Empty(root.to_path_buf()));
    }
    Ok((CorpusManifest::from_records(root.to_path_buf(), partition, records), skipped))
}
