//! Speaker-labelled utterance manifests and fixed-length excerpt drawing.

mod manifest;
mod scan;
mod segment;
pub mod surrogate;

pub use manifest::{CorpusManifest, Partition, UtteranceRecord};
pub use scan::{scan_corpus, ScanOptions, Skipped};
pub use segment::{draw_segment, AudioCache};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no decodable audio found under {0}")]
    Empty(PathBuf),
    #[error("unknown speaker `{0}`")]
    UnknownSpeaker(String),
    #[error("segment length must be positive, got {0}")]
    Length(f64),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed manifest {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Audio(#[from] crate::audio::AudioError),
}
