use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AcousticsError;

/// Reverberation regime a scene's RT60 is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Normal,
    Faint,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Normal => "normal",
            Regime::Faint => "faint",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(Regime::Normal),
            "faint" => Ok(Regime::Faint),
            other => Err(format!("unknown regime `{other}` (expected normal|faint)")),
        }
    }
}

/// Sampling ranges for room geometry and source placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub dims_min: [f64; 3],
    pub dims_max: [f64; 3],
    pub rt60_normal: [f64; 2],
    pub rt60_faint: [f64; 2],
    /// Minimum clearance from the four walls and the floor.
    pub wall_margin: f64,
    pub max_height: f64,
    /// Sources closer than this to the microphone are "near".
    pub near_threshold: f64,
    pub near_sources: usize,
    pub far_sources: usize,
    /// Lower bound on any source-to-microphone distance.
    pub min_mic_distance: f64,
    pub max_attempts: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            dims_min: [3.0, 4.0, 2.13],
            dims_max: [7.0, 8.0, 3.0],
            rt60_normal: [0.1, 0.5],
            rt60_faint: [0.1, 0.2],
            wall_margin: 0.5,
            max_height: 1.8,
            near_threshold: 1.5,
            near_sources: 2,
            far_sources: 3,
            min_mic_distance: 0.4,
            max_attempts: 10_000,
        }
    }
}

/// A shoebox room with one microphone and labelled source positions (meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomScene {
    pub dims: [f64; 3],
    pub rt60: f64,
    pub mic_pos: [f64; 3],
    pub source_positions: Vec<[f64; 3]>,
    pub near_mask: Vec<bool>,
    pub regime: Regime,
    pub seed: u64,
}

pub(crate) fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl RoomScene {
    pub fn id(&self) -> String {
        format!("scene-{:016x}", self.seed)
    }

    pub fn source_distance(&self, index: usize) -> f64 {
        distance(&self.source_positions[index], &self.mic_pos)
    }

    pub fn near_indices(&self) -> Vec<usize> {
        (0..self.near_mask.len()).filter(|&i| self.near_mask[i]).collect()
    }

    pub fn far_indices(&self) -> Vec<usize> {
        (0..self.near_mask.len()).filter(|&i| !self.near_mask[i]).collect()
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dims;
        2.0 * (x * y + x * z + y * z)
    }

    /// Checks the geometric invariants against `cfg`.
    pub fn validate(&self, cfg: &SceneConfig) -> Result<(), AcousticsError> {
        let bad = |msg: String| Err(AcousticsError::InvalidScene(msg));
        for a in 0..3 {
            if !(cfg.dims_min[a] <= self.dims[a] && self.dims[a] <= cfg.dims_max[a]) {
                return bad(format!("dimension {a} = {} outside range", self.dims[a]));
            }
        }
        let range = match self.regime {
            Regime::Normal => cfg.rt60_normal,
            Regime::Faint => cfg.rt60_faint,
        };
        if !(range[0] <= self.rt60 && self.rt60 <= range[1]) {
            return bad(format!("rt60 {} outside {:?}", self.rt60, range));
        }
        if self.source_positions.len() != self.near_mask.len() {
            return bad("near mask length mismatch".into());
        }
        let positions = std::iter::once(&self.mic_pos).chain(&self.source_positions);
        for p in positions {
            let inside = p[0] >= cfg.wall_margin
                && p[0] <= self.dims[0] - cfg.wall_margin
                && p[1] >= cfg.wall_margin
                && p[1] <= self.dims[1] - cfg.wall_margin
                && p[2] >= cfg.wall_margin
                && p[2] <= cfg.max_height;
            if !inside {
                return bad(format!("position {p:?} violates wall clearance"));
            }
        }
        for (k, near) in self.near_mask.iter().enumerate() {
            if (self.source_distance(k) < cfg.near_threshold) != *near {
                return bad(format!("source {k} near label inconsistent with distance"));
            }
        }
        let n_near = self.near_mask.iter().filter(|&&n| n).count();
        if n_near != cfg.near_sources || self.near_mask.len() - n_near != cfg.far_sources {
            return bad(format!("expected {} near / {} far sources", cfg.near_sources, cfg.far_sources));
        }
        Ok(())
    }
}

impl SceneConfig {
    /// Draws a scene by rejection sampling; deterministic in `seed`.
    pub fn sample(&self, seed: u64, regime: Regime) -> Result<RoomScene, AcousticsError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = [0.0; 3];
        for a in 0..3 {
            dims[a] = rng.gen_range(self.dims_min[a]..=self.dims_max[a]);
        }
        let rt = match regime {
            Regime::Normal => self.rt60_normal,
            Regime::Faint => self.rt60_faint,
        };
        let rt60 = rng.gen_range(rt[0]..=rt[1]);
        let lo = [self.wall_margin; 3];
        let hi = [dims[0] - self.wall_margin, dims[1] - self.wall_margin, self.max_height];
        if (0..3).any(|a| hi[a] <= lo[a]) {
            return Err(AcousticsError::InvalidScene(format!("no admissible region in room {dims:?}")));
        }
        let draw = |rng: &mut ChaCha8Rng| -> [f64; 3] {
            [rng.gen_range(lo[0]..=hi[0]), rng.gen_range(lo[1]..=hi[1]), rng.gen_range(lo[2]..=hi[2])]
        };
        let mic_pos = draw(&mut rng);
        let mut near = Vec::with_capacity(self.near_sources);
        let mut far = Vec::with_capacity(self.far_sources);
        let mut attempts = 0;
        while near.len() < self.near_sources || far.len() < self.far_sources {
            if attempts == self.max_attempts {
                return Err(AcousticsError::RejectionLimit(attempts));
            }
            attempts += 1;
            let p = draw(&mut rng);
            let d = distance(&p, &mic_pos);
            if d < self.min_mic_distance {
                continue;
            }
            if d < self.near_threshold {
                if near.len() < self.near_sources {
                    near.push(p);
                }
            } else if far.len() < self.far_sources {
                far.push(p);
            }
        }
        let near_mask = std::iter::repeat(true).take(near.len()).chain(std::iter::repeat(false).take(far.len())).collect();
        near.extend(far);
        Ok(RoomScene { dims, rt60, mic_pos, source_positions: near, near_mask, regime, seed })
    }
}

/// Samples a scene with the default ranges.
pub fn sample_room_scene(seed: u64, regime: Regime) -> Result<RoomScene, AcousticsError> {
    SceneConfig::default().sample(seed, regime)
}
