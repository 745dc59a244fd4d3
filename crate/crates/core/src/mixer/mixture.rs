use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::render::{render_source, set_rms};
use super::{MixerError, ScenarioConfig};
use crate::acoustics::{generate_rir, ImpulseResponse, RirBank, RirConfig, RoomScene};
use crate::corpus::{draw_segment, AudioCache, CorpusManifest};
use crate::rng::{derive_seed, rng_for};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StemRole {
    Target,
    Interferer,
    Intruder,
}

/// A scene together with the impulse response of each of its source positions.
#[derive(Debug, Clone)]
pub struct SceneRirs<T> {
    pub scene_id: String,
    pub scene: RoomScene,
    pub rirs: Vec<ImpulseResponse<T>>,
}

impl<T: Real> SceneRirs<T> {
    pub fn simulate(scene: RoomScene, cfg: &RirConfig) -> Result<Self, MixerError> {
        let rirs = (0..scene.source_positions.len())
            .map(|k| generate_rir(&scene, k, cfg))
            .collect::<Result<_, _>>()?;
        Ok(Self { scene_id: scene.id(), scene, rirs })
    }

    /// Reads scene `index` of a stored bank.
    pub fn load(bank: &RirBank, index: usize) -> Result<Self, MixerError> {
        let record = &bank.records[index];
        let rirs = (0..record.sources.len()).map(|k| bank.load_rir(index, k)).collect::<Result<_, _>>()?;
        Ok(Self { scene_id: record.scene_id.clone(), scene: record.to_scene(), rirs })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSample<T> {
    pub mixture: Vec<T>,
    /// Reverberant image of the near target; equal to `stems[0]`.
    pub target: Vec<T>,
    pub stems: Vec<Vec<T>>,
    pub roles: Vec<StemRole>,
    pub speaker_ids: Vec<String>,
    /// Scene source position used by each stem.
    pub source_indices: Vec<usize>,
    pub target_speaker_label: usize,
    pub scene_id: String,
    pub scenario: ScenarioConfig,
    pub seed: u64,
    /// Global factor applied after the peak check (1 when no rescaling happened).
    pub gain: f64,
    /// First sample of the intruder's dry signal.
    pub intruder_onset: Option<usize>,
}

impl<T: Real> MixtureSample<T> {
    pub fn len(&self) -> usize {
        self.mixture.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mixture.is_empty()
    }
}

fn uniform(rng: &mut impl Rng, iv: [f64; 2]) -> f64 {
    if iv[0] == iv[1] {
        iv[0]
    } else {
        rng.gen_range(iv[0]..iv[1])
    }
}

/// Near target at the scene's first near position, `n − 1` far interferers, and
/// optionally a near intruder active only during the final seconds.
pub fn make_mixture<T: Real>(
    scene: &SceneRirs<T>,
    manifest: &CorpusManifest,
    cache: &AudioCache,
    cfg: &ScenarioConfig,
    seed: u64,
) -> Result<MixtureSample<T>, MixerError> {
    cfg.validate()?;
    let near = scene.scene.near_indices();
    let far = scene.scene.far_indices();
    let n_far = cfg.n_speakers - 1;
    let n_near = if cfg.intruded { 2 } else { 1 };
    if near.len() < n_near || far.len() < n_far {
        return Err(MixerError::Config(format!(
            "scene {} has {} near / {} far positions, need {n_near} / {n_far}",
            scene.scene_id,
            near.len(),
            far.len()
        )));
    }
    if scene.rirs.len() != scene.scene.source_positions.len() {
        return Err(MixerError::Config(format!("scene {} is missing impulse responses", scene.scene_id)));
    }
    let n_sources = cfg.n_speakers + usize::from(cfg.intruded);
    let speakers: Vec<&str> = manifest.speakers().collect();
    if speakers.len() < n_sources {
        return Err(MixerError::Config(format!("corpus has {} speakers, need {n_sources}", speakers.len())));
    }

    let mut rng = rng_for(seed, &[0x4d49_5800]);
    let chosen: Vec<String> =
        sample_indices(&mut rng, speakers.len(), n_sources).into_iter().map(|i| speakers[i].to_string()).collect();
    let mut roles = vec![StemRole::Target];
    let mut positions = vec![near[0]];
    roles.extend(std::iter::repeat(StemRole::Interferer).take(n_far));
    positions.extend_from_slice(&far[..n_far]);
    if cfg.intruded {
        roles.push(StemRole::Intruder);
        positions.push(near[1]);
    }

    let n = cfg.samples();
    let mut intruder_onset = None;
    let mut stems = Vec::with_capacity(n_sources);
    for (k, (&role, &pos)) in roles.iter().zip(&positions).enumerate() {
        let range = if role == StemRole::Interferer { cfg.rms_far_db } else { cfg.rms_near_db };
        let level = uniform(&mut rng, range);
        let mut dry: Vec<T> = draw_segment(manifest, cache, &chosen[k], cfg.mixture_length, derive_seed(seed, &[k as u64]))?;
        if role == StemRole::Intruder {
            let active = ((uniform(&mut rng, cfg.intruder_length) * 16_000.0).round() as usize).clamp(1, n);
            let onset = n - active;
            dry[..onset].iter_mut().for_each(|v| *v = T::zero());
            let scaled = set_rms(&dry[onset..], level)?;
            dry[onset..].copy_from_slice(&scaled);
            intruder_onset = Some(onset);
        } else {
            dry = set_rms(&dry, level)?;
        }
        stems.push(render_source(&dry, &scene.rirs[pos])?);
    }

    let sum = |stems: &[Vec<T>]| {
        let mut mix = vec![T::zero(); n];
        for s in stems {
            mix.iter_mut().zip(s).for_each(|(m, &v)| *m += v);
        }
        mix
    };
    let mut mixture = sum(&stems);
    let peak = mixture.iter().fold(0.0f64, |m, v| m.max(v.to_f64_lossy().abs()));
    let mut gain = 1.0;
    if peak > 1.0 {
        gain = 0.99 / peak;
        let g = T::lit(gain);
        stems.iter_mut().flatten().for_each(|v| *v *= g);
        mixture = sum(&stems);
    }

    Ok(MixtureSample {
        target: stems[0].clone(),
        target_speaker_label: manifest.label(&chosen[0])?,
        mixture,
        stems,
        roles,
        speaker_ids: chosen,
        source_indices: positions,
        scene_id: scene.scene_id.clone(),
        scenario: cfg.clone(),
        seed,
        gain,
        intruder_onset,
    })
}
