//! Signal processing, room simulation and data synthesis for near-sound target
//! speaker extraction.
//!
//! Numeric routines are generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar type for the common cases.

pub mod acoustics;
pub mod audio;
pub mod corpus;
pub mod mixer;
pub mod rng;
pub mod scalar;
pub mod signal;

pub use scalar::Real;

/// Single-precision spectrogram used by training and inference.
pub type Spectrogram = signal::ComplexSpectrogram<f32>;
/// Double-precision spectrogram used by numerical checks.
pub type Spectrogram64 = signal::ComplexSpectrogram<f64>;
pub type Rir = acoustics::ImpulseResponse<f32>;
pub type Mixture = mixer::MixtureSample<f32>;
