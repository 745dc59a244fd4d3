//! Stages `rir → corpus → mix → train → evaluate`, each cached under the
//! experiment directory by a hash of its inputs and of its upstream stages.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nsx_core::acoustics::{read_rir_bank, write_rir_bank, Regime};
use nsx_core::corpus::surrogate::write_surrogate_corpus;
use nsx_core::corpus::{scan_corpus, CorpusManifest, Partition, ScanOptions};
use nsx_core::mixer::{build_dataset, load_sample, read_dataset, SceneRirs};
use nsx_core::rng::derive_seed;
use nsx_nn::model::{load_checkpoint, Model, ModelConfig};
use nsx_nn::trainer::{evaluate_dataset, fit, EvalReport, Example, BEST_CHECKPOINT};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{CorpusSource, ExperimentConfig, SetSpec, Split};
use crate::report::{self, ReportRow};
use crate::{BoxError, PipelineError};

pub const STAGE_FILE: &str = "stage.json";
pub const PROVENANCE_FILE: &str = "provenance.json";
pub const CORPUS_MANIFEST: &str = "manifest.json";
const EVAL_REPORT: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub hash: String,
    pub skipped: bool,
}

/// SHA-256 of the canonical JSON form of `value`.
pub fn content_hash(value: &impl Serialize) -> String {
    let json = serde_json::to_vec(value).expect("serialisable stage inputs");
    hex::encode(Sha256::digest(&json))
}

pub fn file_hash(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn partition(split: Split) -> Partition {
    match split {
        Split::Train => Partition::Train,
        Split::Dev => Partition::Dev,
        Split::Test => Partition::Test,
    }
}

fn boxed<E: std::error::Error + Send + Sync + 'static>(e: E) -> BoxError {
    Box::new(e)
}

/// A trained model: its stage directory, stage hash and checkpoint digest.
#[derive(Debug, Clone)]
pub struct Trained {
    pub config: ModelConfig,
    pub dir: PathBuf,
    pub hash: String,
    pub checkpoint_sha256: String,
}

pub struct Pipeline {
    pub cfg: ExperimentConfig,
    root: PathBuf,
    stages: Vec<StageRecord>,
    checkpoints: BTreeMap<String, String>,
    quiet: bool,
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let root = cfg.root();
        fs::create_dir_all(&root).map_err(|source| PipelineError::Io { path: root.clone(), source })?;
        Ok(Self { cfg, root, stages: Vec::new(), checkpoints: BTreeMap::new(), quiet: false })
    }

    pub fn quiet(mut self, quiet: bool) -> Self {
        self.quiet = quiet;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stages(&self) -> &[StageRecord] {
        &self.stages
    }

    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    /// Runs `body` in `dir` unless a completed stage with the same hash is there.
    fn stage(
        &mut self,
        name: String,
        dir: &Path,
        inputs: &impl Serialize,
        body: impl FnOnce(&Path) -> Result<(), BoxError>,
    ) -> Result<String, PipelineError> {
        let hash = content_hash(&(&name, inputs));
        if self.stages.iter().any(|r| r.stage == name && r.hash == hash) {
            return Ok(hash);
        }
        let marker = dir.join(STAGE_FILE);
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| PipelineError::Io { path, source }
        };
        if let Ok(text) = fs::read_to_string(&marker) {
            if serde_json::from_str::<StageRecord>(&text).is_ok_and(|r| r.hash == hash) {
                self.log(format!("[{name}] up to date"));
                self.stages.push(StageRecord { stage: name, hash: hash.clone(), skipped: true });
                return Ok(hash);
            }
        }
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(io(dir))?;
        }
        fs::create_dir_all(dir).map_err(io(dir))?;
        self.log(format!("[{name}] running"));
        body(dir).map_err(|source| PipelineError::Stage { stage: name.clone(), source })?;
        let record = StageRecord { stage: name, hash: hash.clone(), skipped: false };
        fs::write(&marker, serde_json::to_string_pretty(&record).expect("record")).map_err(io(&marker))?;
        self.stages.push(record);
        Ok(hash)
    }

    pub fn rir(&mut self, split: Split, regime: Regime) -> Result<(PathBuf, String), PipelineError> {
        let a = &self.cfg.acoustics;
        let count = a.scenes[split.index()];
        let seed = derive_seed(self.cfg.acoustics_seed(), &[split.index() as u64, regime as u64]);
        let (scene, rir) = (a.scene.clone(), a.rir.clone());
        let dir = self.root.join("rir").join(format!("{}-{}", split.as_str(), regime.as_str()));
        let inputs = (&scene, &rir, count, seed);
        let hash = self.stage(format!("rir/{}-{}", split.as_str(), regime.as_str()), &dir, &inputs, |d| {
            write_rir_bank(d, count, regime, seed, &scene, &rir).map(|_| ()).map_err(boxed)
        })?;
        Ok((dir, hash))
    }

    pub fn corpus(&mut self, split: Split) -> Result<(PathBuf, String), PipelineError> {
        let c = self.cfg.corpus.clone();
        let dir = self.root.join("corpus").join(split.as_str());
        let opts = ScanOptions { speaker_depth: c.speaker_depth };
        let quiet = self.quiet;
        let hash = match c.source {
            CorpusSource::Surrogate => {
                let spec = c.surrogate[split.index()].clone();
                self.stage(format!("corpus/{}", split.as_str()), &dir, &("surrogate", &spec), |d| {
                    let audio = d.join("audio");
                    write_surrogate_corpus(&audio, &spec).map_err(boxed)?;
                    let (m, _) = scan_corpus(&audio, partition(split), &ScanOptions::default()).map_err(boxed)?;
                    m.save(&d.join(CORPUS_MANIFEST)).map_err(boxed)
                })?
            }
            CorpusSource::Directory => {
                let root = c.roots[split.index()].clone();
                self.stage(format!("corpus/{}", split.as_str()), &dir, &("directory", &root, c.speaker_depth), |d| {
                    let (m, skipped) = scan_corpus(&root, partition(split), &opts).map_err(boxed)?;
                    if !quiet && !skipped.is_empty() {
                        eprintln!("skipped {} undecodable files under {}", skipped.len(), root.display());
                    }
                    m.save(&d.join(CORPUS_MANIFEST)).map_err(boxed)
                })?
            }
        };
        Ok((dir, hash))
    }

    fn set_seed(&self, split: Split, set: &SetSpec) -> u64 {
        let key = Sha256::digest(set.key().as_bytes());
        let tag = u64::from_le_bytes(key[..8].try_into().expect("8 bytes"));
        derive_seed(self.cfg.scenario_seed(), &[split.index() as u64, tag])
    }

    pub fn mix(&mut self, split: Split, set: &SetSpec) -> Result<(PathBuf, String), PipelineError> {
        let (rir_dir, rir_hash) = self.rir(split, set.scenario.regime)?;
        let (corpus_dir, corpus_hash) = self.corpus(split)?;
        let seed = self.set_seed(split, set);
        let dir = self.root.join("mix").join(split.as_str()).join(set.key());
        let inputs = (set, seed, &rir_hash, &corpus_hash);
        let hash = self.stage(format!("mix/{}/{}", split.as_str(), set.key()), &dir, &inputs, |d| {
            let bank = read_rir_bank(&rir_dir).map_err(boxed)?;
            let scenes = (0..bank.records.len())
                .map(|i| SceneRirs::<f32>::load(&bank, i))
                .collect::<Result<Vec<_>, _>>()
                .map_err(boxed)?;
            let manifest = CorpusManifest::load(&corpus_dir.join(CORPUS_MANIFEST)).map_err(boxed)?;
            build_dataset(&scenes, &manifest, &set.scenario, set.count, seed, d).map(|_| ()).map_err(boxed)
        })?;
        Ok((dir, hash))
    }

    /// Every dataset of a split as `(set, directory, hash)`.
    pub fn datasets(&mut self, split: Split) -> Result<Vec<(SetSpec, PathBuf, String)>, PipelineError> {
        let sets = self.cfg.scenario.sets(split).to_vec();
        sets.into_iter()
            .map(|s| {
                let (dir, hash) = self.mix(split, &s)?;
                Ok((s, dir, hash))
            })
            .collect()
    }

    pub fn prepare_data(&mut self) -> Result<(), PipelineError> {
        for split in Split::ALL {
            self.datasets(split)?;
        }
        Ok(())
    }

    fn examples(dirs: &[(SetSpec, PathBuf, String)], labels: bool) -> Result<Vec<Example<f32>>, BoxError> {
        let mut out = Vec::new();
        for (set, dir, _) in dirs {
            for entry in read_dataset(dir)? {
                let sample = load_sample::<f32>(dir, &entry)?;
                out.push(Example::from_sample(format!("{}/{}", set.key(), entry.sample_id), sample, labels));
            }
        }
        Ok(out)
    }

    /// Trains `model` (its speaker count is taken from the training corpus).
    pub fn train(&mut self, model: &ModelConfig) -> Result<Trained, PipelineError> {
        let train_sets = self.datasets(Split::Train)?;
        let dev_sets = self.datasets(Split::Dev)?;
        let (corpus_dir, _) = self.corpus(Split::Train)?;
        let manifest = CorpusManifest::load(&corpus_dir.join(CORPUS_MANIFEST))
            .map_err(|e| PipelineError::Stage { stage: "train".into(), source: boxed(e) })?;
        let config = ModelConfig { speakers: manifest.num_speakers(), ..model.clone() };
        let trainer = self.cfg.trainer.clone();
        let slug = config.slug();
        let dir = self.root.join("train").join(&slug);
        let hashes: Vec<&String> = train_sets.iter().chain(&dev_sets).map(|(_, _, h)| h).collect();
        let inputs = (&config, &trainer, &hashes);
        let quiet = self.quiet;
        let init_seed = derive_seed(trainer.seed, &[0x4d4f_4445]);
        let hash = self.stage(format!("train/{slug}"), &dir, &inputs, |d| {
            let train = Self::examples(&train_sets, true)?;
            let dev = Self::examples(&dev_sets, false)?;
            let mut model = Model::<f32>::new(config.clone(), init_seed)?;
            let report = fit(&mut model, &train, &dev, &trainer, Some(d), |r| {
                if !quiet {
                    eprintln!(
                        "[train/{}] epoch {} loss {:.3} dev {:.2} dB lr {:.2e} clipped {}",
                        config.slug(),
                        r.epoch,
                        r.train_loss,
                        r.dev_sisdr,
                        r.lr,
                        r.clip_events
                    );
                }
            })?;
            let summary = serde_json::json!({
                "best_epoch": report.best_epoch,
                "best_dev_sisdr": report.best_dev_sisdr,
                "stopped_early": report.stopped_early,
                "steps": report.step_losses.len(),
                "parameters": model.params.numel(),
            });
            fs::write(d.join("fit.json"), serde_json::to_string_pretty(&summary)?)?;
            Ok(())
        })?;
        let checkpoint_sha256 = file_hash(&dir.join(BEST_CHECKPOINT))?;
        self.checkpoints.insert(slug, checkpoint_sha256.clone());
        Ok(Trained { config, dir, hash, checkpoint_sha256 })
    }

    /// Evaluates a trained model on one test set.
    pub fn evaluate(&mut self, trained: &Trained, set: &SetSpec) -> Result<EvalReport, PipelineError> {
        let (data_dir, data_hash) = self.mix(Split::Test, set)?;
        let slug = trained.config.slug();
        let dir = self.root.join("eval").join(&slug).join(set.key());
        let stft = self.cfg.trainer.stft;
        let inputs = (&trained.checkpoint_sha256, &data_hash, &stft);
        let ckpt = trained.dir.join(BEST_CHECKPOINT);
        self.stage(format!("evaluate/{slug}/{}", set.key()), &dir, &inputs, |d| {
            let model = load_checkpoint::<f32>(&ckpt)?.model;
            let entries = read_dataset(&data_dir)?;
            let report = evaluate_dataset(&model, &data_dir, &entries, &stft);
            report.write(d)?;
            fs::write(d.join(EVAL_REPORT), serde_json::to_string(&report)?)?;
            Ok(())
        })?;
        let path = dir.join(EVAL_REPORT);
        let text = fs::read_to_string(&path).map_err(|source| PipelineError::Io { path: path.clone(), source })?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Stage { stage: format!("evaluate/{slug}"), source: boxed(e) })
    }

    fn evaluate_all(&mut self, trained: &Trained, label: &str) -> Result<Vec<ReportRow>, PipelineError> {
        let sets = self.cfg.scenario.test.clone();
        let mut rows = Vec::new();
        for set in &sets {
            let report = self.evaluate(trained, set)?;
            rows.extend(report.summary.iter().map(|s| ReportRow {
                variant: label.to_string(),
                slug: trained.config.slug(),
                scenario: s.scenario.clone(),
                count: s.count,
                failed: s.failed,
                mean_si_sdr: s.mean_si_sdr,
                mean_si_sdr_mixture: s.mean_si_sdr_mixture,
                mean_si_sdri: s.mean_si_sdri,
                checkpoint_sha256: trained.checkpoint_sha256.clone(),
                config_hash: self.config_hash(),
                seed: self.cfg.seed,
            }));
        }
        Ok(rows)
    }

    /// Trains and evaluates each model, then writes the comparison report `name`.
    pub fn compare(&mut self, name: &str, models: &[ModelConfig]) -> Result<Vec<ReportRow>, PipelineError> {
        self.prepare_data()?;
        let mut rows = Vec::new();
        let mut curves = Vec::new();
        for m in models {
            let trained = self.train(m)?;
            rows.extend(self.evaluate_all(&trained, &trained.config.variant())?);
            curves.push((trained.config.variant(), trained.dir.clone()));
        }
        report::write_reports(&self.root.join("reports").join(name), &rows, &curves)?;
        self.write_provenance()?;
        Ok(rows)
    }

    /// Full pipeline for the configured model.
    pub fn run(&mut self) -> Result<Vec<ReportRow>, PipelineError> {
        let model = self.cfg.model.clone();
        self.compare("main", &[model])
    }

    /// The configured ablation variants on identical data and seeds.
    pub fn ablate(&mut self) -> Result<Vec<ReportRow>, PipelineError> {
        let models: Vec<ModelConfig> = self.cfg.ablation.variants.iter().map(|v| v.apply(&self.cfg.model)).collect();
        self.compare("ablation", &models)
    }

    /// Hash of the effective config, independent of where the run is stored.
    pub fn config_hash(&self) -> String {
        let mut cfg = self.cfg.clone();
        cfg.output_root = PathBuf::new();
        content_hash(&cfg)
    }

    pub fn write_provenance(&self) -> Result<(), PipelineError> {
        let record = serde_json::json!({
            "config": self.cfg,
            "config_hash": self.config_hash(),
            "seeds": {
                "global": self.cfg.seed,
                "acoustics": self.cfg.acoustics_seed(),
                "scenario": self.cfg.scenario_seed(),
                "trainer": self.cfg.trainer.seed,
            },
            "stages": self.stages,
            "checkpoints": self.checkpoints,
        });
        let path = self.root.join(PROVENANCE_FILE);
        fs::write(&path, serde_json::to_string_pretty(&record).expect("provenance"))
            .map_err(|source| PipelineError::Io { path, source })
    }
}
