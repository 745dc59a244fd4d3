use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_rir, AcousticsError, ImpulseResponse, Regime, RirConfig, RoomScene, SceneConfig};
use crate::audio::{read_wav_as, write_wav};
use crate::rng::derive_seed;
use crate::Real;

pub const SCENES_FILE: &str = "scenes.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub pos: [f64; 3],
    pub distance: f64,
    pub near: bool,
}

/// One line of the scene metadata file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub dims: [f64; 3],
    pub rt60: f64,
    pub mic_pos: [f64; 3],
    pub sources: Vec<SourceRecord>,
    pub seed: u64,
    pub regime: Regime,
}

impl SceneRecord {
    pub fn from_scene(scene_id: String, scene: &RoomScene) -> Self {
        let sources = scene
            .source_positions
            .iter()
            .enumerate()
            .map(|(k, &pos)| SourceRecord { pos, distance: scene.source_distance(k), near: scene.near_mask[k] })
            .collect();
        Self {
            scene_id,
            dims: scene.dims,
            rt60: scene.rt60,
            mic_pos: scene.mic_pos,
            sources,
            seed: scene.seed,
            regime: scene.regime,
        }
    }

    pub fn to_scene(&self) -> RoomScene {
        RoomScene {
            dims: self.dims,
            rt60: self.rt60,
            mic_pos: self.mic_pos,
            source_positions: self.sources.iter().map(|s| s.pos).collect(),
            near_mask: self.sources.iter().map(|s| s.near).collect(),
            regime: self.regime,
            seed: self.seed,
        }
    }
}

/// Scenes with the on-disk location of each source's response.
#[derive(Debug, Clone)]
pub struct RirBank {
    pub root: PathBuf,
    pub records: Vec<SceneRecord>,
}

fn rir_path(root: &Path, scene_id: &str, source: usize) -> PathBuf {
    root.join(scene_id).join(format!("src{source}.wav"))
}

impl RirBank {
    pub fn scenes(&self) -> Vec<RoomScene> {
        self.records.iter().map(SceneRecord::to_scene).collect()
    }

    pub fn rir_path(&self, scene: usize, source: usize) -> PathBuf {
        rir_path(&self.root, &self.records[scene].scene_id, source)
    }

    pub fn load_rir<T: Real>(&self, scene: usize, source: usize) -> Result<ImpulseResponse<T>, AcousticsError> {
        let rec = &self.records[scene];
        Ok(ImpulseResponse {
            samples: read_wav_as(&self.rir_path(scene, source))?,
            source_distance: rec.sources[source].distance,
            scene_ref: rec.scene_id.clone(),
            source_index: source,
            fs: 16_000,
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AcousticsError + '_ {
    move |source| AcousticsError::Io { path: path.to_path_buf(), source }
}

/// Samples `count` scenes, renders every source's response as a float WAV under
/// `out/<scene_id>/`, and writes one metadata line per scene.
pub fn write_rir_bank(
    out: &Path,
    count: usize,
    regime: Regime,
    seed: u64,
    scene_cfg: &SceneConfig,
    rir_cfg: &RirConfig,
) -> Result<RirBank, AcousticsError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let records: Vec<SceneRecord> = (0..count)
        .into_par_iter()
        .map(|i| {
            let scene = scene_cfg.sample(derive_seed(seed, &[i as u64]), regime)?;
            let id = format!("scene_{i:05}");
            let dir = out.join(&id);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            for k in 0..scene.source_positions.len() {
                let ir = generate_rir::<f32>(&scene, k, rir_cfg)?;
                write_wav(&rir_path(out, &id, k), &ir.samples, rir_cfg.fs)?;
            }
            Ok(SceneRecord::from_scene(id, &scene))
        })
        .collect::<Result<_, AcousticsError>>()?;
    let meta = out.join(SCENES_FILE);
    let mut f = fs::File::create(&meta).map_err(io_err(&meta))?;
    for r in &records {
        writeln!(f, "{}", serde_json::to_string(r)?).map_err(io_err(&meta))?;
    }
    Ok(RirBank { root: out.to_path_buf(), records })
}

pub fn read_rir_bank(root: &Path) -> Result<RirBank, AcousticsError> {
    let meta = root.join(SCENES_FILE);
    let f = fs::File::open(&meta).map_err(io_err(&meta))?;
    let mut records = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(io_err(&meta))?;
        if !line.trim().is_empty() {
            records.push(serde_json::from_str(&line)?);
        }
    }
    Ok(RirBank { root: root.to_path_buf(), records })
}
