//! Experiment configuration file (TOML).

use std::path::{Path, PathBuf};

use nsx_core::acoustics::{RirConfig, SceneConfig};
use nsx_core::corpus::surrogate::SurrogateSpec;
use nsx_core::mixer::ScenarioConfig;
use nsx_core::rng::derive_seed;
use nsx_nn::model::{Architecture, ModelConfig};
use nsx_nn::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::PipelineError;

/// Environment variables that may replace paths from the file.
pub const ENV_OUTPUT_ROOT: &str = "NSX_OUTPUT_ROOT";
pub const ENV_CORPUS_ROOTS: [&str; 3] = ["NSX_CORPUS_TRAIN", "NSX_CORPUS_DEV", "NSX_CORPUS_TEST"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcousticsSection {
    /// Scenes simulated per split and reverberation regime.
    pub scenes: [usize; 3],
    pub seed: Option<u64>,
    pub scene: SceneConfig,
    pub rir: RirConfig,
}

impl Default for AcousticsSection {
    fn default() -> Self {
        Self { scenes: [64, 16, 32], seed: None, scene: SceneConfig::default(), rir: RirConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusSource {
    /// Formant-synthesised speakers generated into the experiment directory.
    Surrogate,
    /// Existing speaker-per-directory trees (e.g. LibriSpeech), one per split.
    Directory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSection {
    pub source: CorpusSource,
    /// Roots for `source = "directory"`, indexed train/dev/test.
    pub roots: Vec<PathBuf>,
    pub speaker_depth: usize,
    /// Surrogate corpus recipes, indexed train/dev/test.
    pub surrogate: Vec<SurrogateSpec>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        let spec = |speakers, offset, seed| SurrogateSpec {
            speakers,
            utterances_per_speaker: 4,
            utterance_seconds: [3.0, 6.0],
            id_offset: offset,
            seed,
        };
        Self {
            source: CorpusSource::Surrogate,
            roots: Vec::new(),
            speaker_depth: 1,
            surrogate: vec![spec(40, 0, 1), spec(10, 1000, 2), spec(12, 2000, 3)],
        }
    }
}

/// One generated dataset: a scenario recipe and how many mixtures to draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSpec {
    pub count: usize,
    #[serde(flatten)]
    pub scenario: ScenarioConfig,
}

impl SetSpec {
    pub fn new(count: usize, scenario: ScenarioConfig) -> Self {
        Self { count, scenario }
    }

    pub fn key(&self) -> String {
        self.scenario.key()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSection {
    pub seed: Option<u64>,
    pub train: Vec<SetSpec>,
    pub dev: Vec<SetSpec>,
    pub test: Vec<SetSpec>,
}

impl ScenarioSection {
    pub fn sets(&self, split: Split) -> &[SetSpec] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

fn short(mut s: ScenarioConfig, seconds: f64) -> ScenarioConfig {
    s.mixture_length = seconds;
    s.intruder_length = [0.2 * seconds, 0.6 * seconds];
    s
}

impl Default for ScenarioSection {
    fn default() -> Self {
        use nsx_core::acoustics::Regime::{Faint, Normal};
        let len = 1.0;
        let mut test: Vec<SetSpec> = (2..=4).map(|n| SetSpec::new(100, short(ScenarioConfig::standard(n), len))).collect();
        for n in [2, 3] {
            for intruded in [false, true] {
                test.push(SetSpec::new(100, short(ScenarioConfig::ablation(n, intruded, Faint), len)));
            }
        }
        Self {
            seed: None,
            train: vec![
                SetSpec::new(300, short(ScenarioConfig::standard(2), len)),
                SetSpec::new(300, short(ScenarioConfig::ablation(2, true, Normal), len)),
            ],
            dev: vec![SetSpec::new(100, short(ScenarioConfig::standard(2), len))],
            test,
        }
    }
}

/// Model variants compared by `ablate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoSe,
    NoTAtt,
    NoFAtt,
    Unet,
    Lstm,
}

impl Variant {
    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let ns = ModelConfig {
            architecture: Architecture::NsExtractor,
            ablate_se: false,
            ablate_t_att: false,
            ablate_f_att: false,
            ..base.clone()
        };
        match self {
            Variant::Full => ns,
            Variant::NoSe => ModelConfig { ablate_se: true, ..ns },
            Variant::NoTAtt => ModelConfig { ablate_t_att: true, ..ns },
            Variant::NoFAtt => ModelConfig { ablate_f_att: true, ..ns },
            Variant::Unet => ModelConfig { architecture: Architecture::Unet, ..ns },
            Variant::Lstm => ModelConfig { architecture: Architecture::Lstm, ..ns },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSection {
    pub variants: Vec<Variant>,
}

impl Default for AblationSection {
    fn default() -> Self {
        Self { variants: vec![Variant::Full, Variant::NoSe, Variant::NoTAtt, Variant::NoFAtt] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub output_root: PathBuf,
    pub seed: u64,
    pub acoustics: AcousticsSection,
    pub corpus: CorpusSection,
    pub scenario: ScenarioSection,
    pub model: ModelConfig,
    pub trainer: TrainConfig,
    pub ablation: AblationSection,
}

impl Default for ExperimentConfig {
    /// Desk-scale reference experiment.
    fn default() -> Self {
        Self {
            experiment_id: "desk".into(),
            output_root: PathBuf::from("runs"),
            seed: 0,
            acoustics: AcousticsSection::default(),
            corpus: CorpusSection::default(),
            scenario: ScenarioSection::default(),
            model: ModelConfig {
                blocks: 2,
                channels: 8,
                att_dim: 4,
                heads: 2,
                lstm_hidden: Some(16),
                unet_filters: vec![8, 16, 32, 64, 128],
                lstm_layers: 2,
                lstm_units: 128,
                ..ModelConfig::default()
            },
            trainer: TrainConfig { batch_size: 8, max_epochs: 10, ..TrainConfig::default() },
            ablation: AblationSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Seconds-scale experiment for smoke tests: a handful of scenes, a
    /// 6-speaker corpus, half-second mixtures and the smallest model widths.
    pub fn smoke() -> Self {
        use nsx_core::acoustics::Regime::Normal;
        let corpus = |speakers, id_offset, seed| SurrogateSpec {
            speakers,
            utterances_per_speaker: 2,
            utterance_seconds: [1.5, 2.0],
            id_offset,
            seed,
        };
        let set = |count, n| SetSpec::new(count, short(ScenarioConfig::standard(n), 0.5));
        Self {
            experiment_id: "smoke".into(),
            acoustics: AcousticsSection { scenes: [4, 2, 2], ..AcousticsSection::default() },
            corpus: CorpusSection { surrogate: vec![corpus(6, 0, 1), corpus(3, 1000, 2), corpus(3, 2000, 3)], ..CorpusSection::default() },
            scenario: ScenarioSection {
                seed: None,
                train: vec![set(8, 2)],
                dev: vec![set(4, 2)],
                test: vec![set(4, 2), SetSpec::new(4, short(ScenarioConfig::ablation(2, true, Normal), 0.5))],
            },
            model: ModelConfig {
                blocks: 1,
                channels: 4,
                att_dim: 2,
                heads: 2,
                lstm_hidden: Some(8),
                unet_filters: vec![4, 8],
                lstm_layers: 1,
                lstm_units: 16,
                ..ModelConfig::default()
            },
            trainer: TrainConfig { batch_size: 4, max_epochs: 2, ..TrainConfig::default() },
            ablation: AblationSection { variants: vec![Variant::Full, Variant::NoSe] },
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| PipelineError::ConfigFile { path: path.to_path_buf(), message: e.to_string() })?;
        cfg.apply_env();
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let text = self.to_toml()?;
        std::fs::write(path, text).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
    }

    pub fn to_toml(&self) -> Result<String, PipelineError> {
        toml::to_string(self).map_err(|e| PipelineError::Config(e.to_string()))
    }

    fn apply_env(&mut self) {
        if let Ok(root) = std::env::var(ENV_OUTPUT_ROOT) {
            self.output_root = root.into();
        }
        for (k, var) in ENV_CORPUS_ROOTS.iter().enumerate() {
            if let Ok(root) = std::env::var(var) {
                if self.corpus.roots.len() <= k {
                    self.corpus.roots.resize(k + 1, PathBuf::new());
                }
                self.corpus.roots[k] = root.into();
            }
        }
    }

    /// Replaces the global seed; per-section seeds then derive from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.acoustics.seed = None;
        self.scenario.seed = None;
        self.trainer.seed = derive_seed(seed, &[4]);
        self
    }

    /// Directory holding every artifact of this experiment.
    pub fn root(&self) -> PathBuf {
        self.output_root.join(&self.experiment_id)
    }

    pub fn acoustics_seed(&self) -> u64 {
        self.acoustics.seed.unwrap_or_else(|| derive_seed(self.seed, &[1]))
    }

    pub fn scenario_seed(&self) -> u64 {
        self.scenario.seed.unwrap_or_else(|| derive_seed(self.seed, &[3]))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.experiment_id.is_empty() || self.experiment_id.contains(['/', '\\']) {
            return bad(format!("experiment_id `{}` must be a plain name", self.experiment_id));
        }
        match self.corpus.source {
            CorpusSource::Surrogate => {
                if self.corpus.surrogate.len() != 3 {
                    return bad("corpus.surrogate needs train, dev and test entries".into());
                }
            }
            CorpusSource::Directory => {
                if self.corpus.roots.len() != 3 {
                    return bad("corpus.roots needs train, dev and test directories".into());
                }
                if let Some(r) = self.corpus.roots.iter().find(|r| !r.is_dir()) {
                    return bad(format!("corpus root {} is not a directory", r.display()));
                }
            }
        }
        for split in Split::ALL {
            let sets = self.scenario.sets(split);
            if sets.is_empty() {
                return bad(format!("scenario.{} has no sets", split.as_str()));
            }
            let mut keys: Vec<String> = sets.iter().map(SetSpec::key).collect();
            keys.sort();
            if keys.windows(2).any(|w| w[0] == w[1]) {
                return bad(format!("scenario.{} repeats a scenario key", split.as_str()));
            }
            for s in sets {
                s.scenario.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
                if s.count == 0 {
                    return bad(format!("set {} has count 0", s.key()));
                }
            }
        }
        if self.acoustics.scenes.contains(&0) {
            return bad("acoustics.scenes entries must be positive".into());
        }
        if self.model.bins != self.trainer.stft.bins() {
            return bad(format!("model.bins {} differs from the STFT's {} bins", self.model.bins, self.trainer.stft.bins()));
        }
        self.model.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.trainer.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }
}
