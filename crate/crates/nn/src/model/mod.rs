//! NS-Extractor and the U-Net / LSTM baselines behind one [`Model`] type.

mod checkpoint;
mod config;
mod lstm;
mod ns_extractor;
mod unet;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, OptimizerState, CHECKPOINT_VERSION};
pub use config::{Architecture, ModelConfig};
pub use lstm::LstmBaseline;
pub use ns_extractor::NsExtractor;
pub use unet::Unet;

use std::path::PathBuf;

use ndarray::{Array3, ArrayD, ArrayView3, Ix3};
use nsx_core::Real;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autograd::{Tape, Var};
use crate::params::{Bound, Init, ParamStore};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("input shape {found:?} does not match [2, {bins}, T]")]
    Shape { found: Vec<usize>, bins: usize },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    /// `F × F` attention between frequencies.
    Subband,
    /// `T × T` attention between frames.
    Fullband,
}

/// Softmax weights `[L, n, n]` of one attention module.
#[derive(Debug, Clone)]
pub struct AttentionMap<T> {
    pub block: usize,
    pub kind: AttentionKind,
    pub weights: ArrayD<T>,
}

/// Forward result: the predicted `[2, F, T]` spectrogram and one logit vector
/// per extractor block (none for the baselines or without the speaker encoder).
pub struct Output<T> {
    pub spec: Var<T>,
    pub logits: Vec<Var<T>>,
    pub attention: Vec<AttentionMap<T>>,
}

#[derive(Debug, Clone)]
pub enum Network {
    NsExtractor(NsExtractor),
    Unet(Unet),
    Lstm(LstmBaseline),
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    pub network: Network,
}

impl<T: Real> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut init = Init::new(ChaCha8Rng::seed_from_u64(seed));
        let network = match config.architecture {
            Architecture::NsExtractor => Network::NsExtractor(NsExtractor::new(&mut params, &mut init, &config)),
            Architecture::Unet => Network::Unet(Unet::new(&mut params, &mut init, &config.unet_filters)),
            Architecture::Lstm => Network::Lstm(LstmBaseline::new(
                &mut params,
                &mut init,
                config.bins,
                config.lstm_layers,
                config.lstm_units,
            )),
        };
        Ok(Self { config, params, network })
    }

    pub fn forward(&self, tape: &Tape<T>, p: &Bound<T>, spec: &Var<T>) -> Result<Output<T>, ModelError> {
        self.run(tape, p, spec, false)
    }

    /// Like [`Model::forward`] but also returns the attention maps.
    pub fn forward_inspect(&self, tape: &Tape<T>, p: &Bound<T>, spec: &Var<T>) -> Result<Output<T>, ModelError> {
        self.run(tape, p, spec, true)
    }

    fn run(&self, tape: &Tape<T>, p: &Bound<T>, spec: &Var<T>, inspect: bool) -> Result<Output<T>, ModelError> {
        let bins = self.config.bins;
        match spec.shape() {
            &[2, f, t] if f == bins && t > 0 => {}
            s => return Err(ModelError::Shape { found: s.to_vec(), bins }),
        }
        let plain = |spec| Output { spec, logits: Vec::new(), attention: Vec::new() };
        Ok(match &self.network {
            Network::NsExtractor(n) => n.forward(tape, p, spec, inspect),
            Network::Unet(n) => plain(n.forward(tape, p, spec)),
            Network::Lstm(n) => plain(n.forward(tape, p, spec)),
        })
    }

    /// Predicted spectrogram without recording gradients.
    pub fn infer(&self, spec: ArrayView3<'_, T>) -> Result<Array3<T>, ModelError> {
        let tape = Tape::inference();
        let p = self.params.bind(&tape);
        let out = self.forward(&tape, &p, &tape.constant(spec.to_owned().into_dyn()))?;
        Ok(out.spec.value().clone().into_dimensionality::<Ix3>().expect("3-d output"))
    }
}
