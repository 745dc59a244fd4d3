use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Dev,
    Test,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Dev => "dev",
            Partition::Test => "test",
        }
    }
}

impl std::str::FromStr for Partition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Partition::Train),
            "dev" => Ok(Partition::Dev),
            "test" => Ok(Partition::Test),
            other => Err(format!("unknown partition `{other}` (expected train|dev|test)")),
        }
    }
}

/// One decodable utterance. `path` is relative to the manifest root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub path: PathBuf,
    pub speaker_id: String,
    pub duration: f64,
    pub sample_rate: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub root: PathBuf,
    pub records: Vec<UtteranceRecord>,
    pub partition: Partition,
    /// Dense class labels, assigned in lexicographic speaker order.
    pub speaker_index: BTreeMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct Companion {
    partition: Partition,
    root: PathBuf,
    speaker_index: BTreeMap<String, usize>,
}

/// Companion speaker-index file stored next to `manifest` (`x.jsonl` → `x.speakers.json`).
pub fn companion_path(manifest: &Path) -> PathBuf {
    let stem = manifest.file_stem().and_then(|s| s.to_str()).unwrap_or("manifest");
    manifest.with_file_name(format!("{stem}.speakers.json"))
}

impl CorpusManifest {
    pub fn from_records(root: PathBuf, partition: Partition, mut records: Vec<UtteranceRecord>) -> Self {
        records.sort_by(|a, b| a.path.cmp(&b.path));
        let mut speakers: Vec<&str> = records.iter().map(|r| r.speaker_id.as_str()).collect();
        speakers.sort_unstable();
        speakers.dedup();
        let speaker_index = speakers.iter().enumerate().map(|(i, s)| (s.to_string(), i)).collect();
        Self { root, records, partition, speaker_index }
    }

    pub fn num_speakers(&self) -> usize {
        self.speaker_index.len()
    }

    pub fn speakers(&self) -> impl Iterator<Item = &str> {
        self.speaker_index.keys().map(String::as_str)
    }

    pub fn label(&self, speaker_id: &str) -> Result<usize, CorpusError> {
        self.speaker_index.get(speaker_id).copied().ok_or_else(|| CorpusError::UnknownSpeaker(speaker_id.into()))
    }

    pub fn utterances_of<'a>(&'a self, speaker_id: &'a str) -> impl Iterator<Item = &'a UtteranceRecord> + 'a {
        self.records.iter().filter(move |r| r.speaker_id == speaker_id)
    }

    pub fn resolve(&self, record: &UtteranceRecord) -> PathBuf {
        self.root.join(&record.path)
    }

    pub fn total_hours(&self) -> f64 {
        self.records.iter().map(|r| r.duration).sum::<f64>() / 3600.0
    }

    /// Writes the JSON-lines manifest and its companion speaker index.
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let io = |source| CorpusError::Io { path: path.to_path_buf(), source };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
        for r in &self.records {
            let line = serde_json::to_string(r).map_err(|source| CorpusError::Json { path: path.into(), source })?;
            writeln!(w, "{line}").map_err(io)?;
        }
        w.flush().map_err(io)?;
        let comp_path = companion_path(path);
        let comp = Companion { partition: self.partition, root: self.root.clone(), speaker_index: self.speaker_index.clone() };
        let text = serde_json::to_string_pretty(&comp)
            .map_err(|source| CorpusError::Json { path: comp_path.clone(), source })?;
        fs::write(&comp_path, text).map_err(|source| CorpusError::Io { path: comp_path, source })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let io = |source| CorpusError::Io { path: path.to_path_buf(), source };
        let f = fs::File::open(path).map_err(io)?;
        let mut records = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|source| CorpusError::Json { path: path.into(), source })?);
        }
        let comp_path = companion_path(path);
        let text = fs::read_to_string(&comp_path).map_err(|source| CorpusError::Io { path: comp_path.clone(), source })?;
        let comp: Companion = serde_json::from_str(&text).map_err(|source| CorpusError::Json { path: comp_path, source })?;
        Ok(Self { root: comp.root, records, partition: comp.partition, speaker_index: comp.speaker_index })
    }
}
