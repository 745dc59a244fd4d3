//! Shoebox room scenes and randomized image-source impulse responses.

mod bank;
mod rir;
mod rt60;
mod scene;

pub use bank::{read_rir_bank, write_rir_bank, RirBank, SceneRecord, SourceRecord};
pub use rir::{
    eyring_absorption, generate_rir, image_decay_absorption, AbsorptionModel, ImpulseResponse, RirConfig, SPEED_OF_SOUND,
};
pub use rt60::{estimate_rt60, schroeder_curve_db};
pub use scene::{sample_room_scene, Regime, RoomScene, SceneConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AcousticsError {
    #[error("scene sampling gave up after {0} rejected positions")]
    RejectionLimit(usize),
    #[error("source index {index} out of range for a scene with {count} sources")]
    SourceIndex { index: usize, count: usize },
    #[error("unsupported sample rate {0} Hz (only 16000 Hz is supported)")]
    SampleRate(u32),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("RT60 estimation failed: {0}")]
    Estimation(&'static str),
    #[error("I/O error on {path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
    #[error("malformed scene metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error(transparent)]
    Audio(#[from] crate::audio::AudioError),
}
