use std::collections::HashMap;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use nsx_core::Real;
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelError};
use crate::params::ParamStore;

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "nsx-checkpoint";
const HEADER_KEY: &str = "nsx";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: ModelConfig,
    epoch: u64,
    step: Option<u64>,
}

/// AdamW moments, one entry per parameter in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub step: u64,
    pub m: Vec<ArrayD<T>>,
    pub v: Vec<ArrayD<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn zeros(params: &ParamStore<T>) -> Self {
        let z: Vec<ArrayD<T>> = params.iter().map(|(_, a)| ArrayD::zeros(a.raw_dim())).collect();
        Self { step: 0, m: z.clone(), v: z }
    }
}

/// Everything needed to resume training or run inference.
#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub model: Model<T>,
    pub epoch: u64,
    pub optimizer: Option<OptimizerState<T>>,
}

fn dtype<T: Real>() -> Dtype {
    if std::mem::size_of::<T>() == 4 {
        Dtype::F32
    } else {
        Dtype::F64
    }
}

fn to_bytes<T: Real>(a: &ArrayD<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(a.len() * std::mem::size_of::<T>());
    for &v in a.iter() {
        if std::mem::size_of::<T>() == 4 {
            out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        } else {
            out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
    }
    out
}

fn from_view<T: Real>(view: &TensorView<'_>) -> Option<ArrayD<T>> {
    let data = view.data();
    let values: Vec<T> = match view.dtype() {
        Dtype::F32 => data.chunks_exact(4).map(|b| T::lit(f32::from_le_bytes(b.try_into().unwrap()) as f64)).collect(),
        Dtype::F64 => data.chunks_exact(8).map(|b| T::lit(f64::from_le_bytes(b.try_into().unwrap()))).collect(),
        _ => return None,
    };
    ArrayD::from_shape_vec(IxDyn(view.shape()), values).ok()
}

/// Writes parameters, optional optimizer moments and a JSON header
/// (`format`, `version`, `config`, `epoch`, `step`) under the metadata key `nsx`.
pub fn save_checkpoint<T: Real>(path: &Path, ckpt: &Checkpoint<T>) -> Result<(), ModelError> {
    let err = |message: String| ModelError::Checkpoint { path: path.to_path_buf(), message };
    let mut tensors: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    for (name, a) in ckpt.model.params.iter() {
        tensors.push((format!("param/{name}"), a.shape().to_vec(), to_bytes(a)));
    }
    if let Some(opt) = &ckpt.optimizer {
        for (k, (name, _)) in ckpt.model.params.iter().enumerate() {
            tensors.push((format!("adam_m/{name}"), opt.m[k].shape().to_vec(), to_bytes(&opt.m[k])));
            tensors.push((format!("adam_v/{name}"), opt.v[k].shape().to_vec(), to_bytes(&opt.v[k])));
        }
    }
    let views = tensors
        .iter()
        .map(|(n, s, b)| TensorView::new(dtype::<T>(), s.clone(), b).map(|v| (n.clone(), v)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| err(e.to_string()))?;
    let header = Header {
        format: FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: ckpt.model.config.clone(),
        epoch: ckpt.epoch,
        step: ckpt.optimizer.as_ref().map(|o| o.step),
    };
    // a single entry, so the header bytes do not depend on map iteration order
    let meta = HashMap::from([(HEADER_KEY.to_string(), serde_json::to_string(&header).map_err(|e| err(e.to_string()))?)]);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| ModelError::Io { path: dir.to_path_buf(), source })?;
    }
    safetensors::serialize_to_file(views, &Some(meta), path).map_err(|e| err(e.to_string()))
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>, ModelError> {
    let err = |message: String| ModelError::Checkpoint { path: path.to_path_buf(), message };
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io { path: path.to_path_buf(), source })?;
    let (_, header) = SafeTensors::read_metadata(&bytes).map_err(|e| err(e.to_string()))?;
    let text = header
        .metadata()
        .as_ref()
        .and_then(|m| m.get(HEADER_KEY))
        .ok_or_else(|| err("not a model checkpoint".into()))?;
    let header: Header = serde_json::from_str(text).map_err(|e| err(e.to_string()))?;
    if header.format != FORMAT {
        return Err(err("not a model checkpoint".into()));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(err(format!("unsupported version {}", header.version)));
    }
    let (config, epoch) = (header.config, header.epoch);
    let st = SafeTensors::deserialize(&bytes).map_err(|e| err(e.to_string()))?;
    let mut model = Model::<T>::new(config, 0)?;
    let read = |key: String, like: &ArrayD<T>| -> Result<ArrayD<T>, ModelError> {
        let view = st.tensor(&key).map_err(|_| err(format!("missing tensor {key}")))?;
        let a = from_view::<T>(&view).ok_or_else(|| err(format!("unreadable tensor {key}")))?;
        if a.shape() != like.shape() {
            return Err(err(format!("{key}: shape {:?}, expected {:?}", a.shape(), like.shape())));
        }
        Ok(a)
    };
    for id in model.params.ids().collect::<Vec<_>>() {
        let name = model.params.name(id).to_string();
        let a = read(format!("param/{name}"), model.params.get(id))?;
        *model.params.get_mut(id) = a;
    }
    let optimizer = match header.step {
        None => None,
        Some(step) => {
            let mut opt = OptimizerState::zeros(&model.params);
            opt.step = step;
            for (k, (name, a)) in model.params.iter().enumerate() {
                opt.m[k] = read(format!("adam_m/{name}"), a)?;
                opt.v[k] = read(format!("adam_v/{name}"), a)?;
            }
            Some(opt)
        }
    };
    Ok(Checkpoint { model, epoch, optimizer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;

    fn cfg() -> ModelConfig {
        ModelConfig { blocks: 1, channels: 4, att_dim: 2, heads: 2, lstm_hidden: Some(3), bins: 9, ..ModelConfig::default() }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.safetensors");
        let model = Model::<f32>::new(cfg(), 7).unwrap();
        let mut opt = OptimizerState::zeros(&model.params);
        opt.step = 12;
        opt.m[0].fill(0.5);
        opt.v[1].fill(0.25);
        save_checkpoint(&path, &Checkpoint { model: model.clone(), epoch: 3, optimizer: Some(opt.clone()) }).unwrap();
        let back = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(back.model.config, model.config);
        assert_eq!(back.model.params, model.params);
        assert_eq!(back.epoch, 3);
        assert_eq!(back.optimizer, Some(opt));
        // an f64 reader sees the same values widened
        let wide = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(wide.model.params, model.params.cast::<f64>());
    }

    #[test]
    fn saving_is_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let model = Model::<f32>::new(cfg(), 3).unwrap();
        let ckpt = Checkpoint { model, epoch: 1, optimizer: Some(OptimizerState::zeros(&Model::<f32>::new(cfg(), 3).unwrap().params)) };
        let bytes: Vec<Vec<u8>> = (0..4)
            .map(|i| {
                let p = dir.path().join(format!("{i}.safetensors"));
                save_checkpoint(&p, &ckpt).unwrap();
                std::fs::read(p).unwrap()
            })
            .collect();
        assert!(bytes.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.safetensors");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path), Err(ModelError::Checkpoint { .. })));
        let unet = Model::<f64>::new(ModelConfig { architecture: Architecture::Unet, unet_filters: vec![2, 3], ..cfg() }, 0).unwrap();
        save_checkpoint(&path, &Checkpoint { model: unet, epoch: 0, optimizer: None }).unwrap();
        assert!(load_checkpoint::<f64>(&path).unwrap().optimizer.is_none());
    }
}
