//! n-speaker reverberant mixtures with a near target and far interferers.

mod dataset;
mod mixture;
mod render;
mod scenario;

pub use dataset::{build_dataset, load_sample, read_dataset, DatasetEntry, MANIFEST_FILE};
pub use mixture::{make_mixture, MixtureSample, SceneRirs, StemRole};
pub use render::{fft_convolve, rms_db, render_source, set_rms};
pub use scenario::ScenarioConfig;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MixerError {
    #[error("source has zero energy; cannot set its level")]
    DegenerateSource,
    #[error("empty impulse response")]
    EmptyRir,
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed dataset manifest {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Acoustics(#[from] crate::acoustics::AcousticsError),
    #[error(transparent)]
    Audio(#[from] crate::audio::AudioError),
}
