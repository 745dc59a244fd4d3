//! STFT front end and waveform-domain separation metrics.

mod metrics;
mod pesq;
mod stft;

pub use metrics::{si_sdr, si_sdr_improvement, SI_SDR_CLAMP_DB};
pub use pesq::PesqAdapter;
pub use stft::{istft, istft_adjoint, sqrt_hann, stft, ComplexSpectrogram, StftConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("empty input signal")]
    EmptyInput,
    #[error("signal lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("reference signal has zero energy")]
    ZeroReference,
    #[error("spectrogram shape {found:?} does not match the STFT configuration (expected {expected_bins} bins)")]
    Shape { found: Vec<usize>, expected_bins: usize },
    #[error("non-finite value in spectrogram")]
    NonFinite,
    #[error("invalid STFT configuration: {0}")]
    Config(String),
    #[error("PESQ adapter: {0}")]
    Pesq(String),
}
