use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nsx_cli::config::Split;
use nsx_cli::report::to_table;
use nsx_cli::{ExperimentConfig, Pipeline};
use nsx_core::acoustics::{read_rir_bank, write_rir_bank, Regime, RirConfig, SceneConfig};
use nsx_core::corpus::{scan_corpus, CorpusManifest, Partition, ScanOptions};
use nsx_core::mixer::{build_dataset, read_dataset, ScenarioConfig, SceneRirs};
use nsx_nn::model::load_checkpoint;
use nsx_nn::trainer::evaluate_dataset;

#[derive(Parser)]
#[command(name = "nsx", version, about = "Distance-cued target speaker extraction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML); built-in desk-scale defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress stage progress on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured RIR banks, or `rir generate` a single bank.
    Rir {
        #[command(flatten)]
        common: Common,
        #[command(subcommand)]
        action: Option<RirAction>,
    },
    /// Build the configured corpus manifests, or `corpus scan` one directory.
    Corpus {
        #[command(flatten)]
        common: Common,
        #[command(subcommand)]
        action: Option<CorpusAction>,
    },
    /// Render the configured datasets, or `mix synth` a single one.
    Mix {
        #[command(flatten)]
        common: Common,
        #[command(subcommand)]
        action: Option<MixAction>,
    },
    /// Train the configured model.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the configured model on every test set, or one checkpoint on one dataset.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, requires_all = ["manifest", "out"])]
        ckpt: Option<PathBuf>,
        /// Dataset manifest (`dataset.jsonl`) or its directory.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate every ablation variant on identical data.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the whole pipeline for the configured model.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Print the effective configuration as TOML.
    Config {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum RirAction {
    Generate {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value = "normal")]
        regime: Regime,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Near/far distance threshold in metres.
        #[arg(long)]
        displacement: Option<f64>,
    },
}

#[derive(Subcommand)]
enum CorpusAction {
    Scan {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        partition: Partition,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        speaker_depth: usize,
    },
}

#[derive(Subcommand)]
enum MixAction {
    Synth {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        intruded: bool,
        #[arg(long, default_value = "normal")]
        regime: Regime,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    Ok(match common.seed {
        Some(seed) => cfg.with_seed(seed),
        None => cfg,
    })
}

fn pipeline(common: &Common) -> Result<Pipeline> {
    Ok(Pipeline::new(load_config(common)?)?.quiet(common.quiet))
}

fn finish(p: &Pipeline) -> Result<()> {
    p.write_provenance()?;
    println!("{}", p.root().display());
    Ok(())
}

fn dataset_dir(manifest: &Path) -> PathBuf {
    if manifest.is_dir() {
        manifest.to_path_buf()
    } else {
        manifest.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Rir { action: Some(RirAction::Generate { count, regime, out, seed, displacement }), .. } => {
            let mut scene = SceneConfig::default();
            if let Some(d) = displacement {
                scene.near_threshold = d;
            }
            let bank = write_rir_bank(&out, count, regime, seed, &scene, &RirConfig::default())?;
            println!("{} scenes written to {}", bank.records.len(), out.display());
        }
        Command::Rir { common, action: None } => {
            let mut p = pipeline(&common)?;
            for split in Split::ALL {
                let mut regimes: Vec<Regime> = p.cfg.scenario.sets(split).iter().map(|s| s.scenario.regime).collect();
                regimes.sort();
                regimes.dedup();
                for r in regimes {
                    p.rir(split, r)?;
                }
            }
            finish(&p)?;
        }
        Command::Corpus { action: Some(CorpusAction::Scan { root, partition, out, speaker_depth }), .. } => {
            let (manifest, skipped) = scan_corpus(&root, partition, &ScanOptions { speaker_depth })?;
            manifest.save(&out)?;
            for s in &skipped {
                eprintln!("skipped {}: {}", s.path.display(), s.reason);
            }
            println!("{} utterances from {} speakers", manifest.records.len(), manifest.num_speakers());
        }
        Command::Corpus { common, action: None } => {
            let mut p = pipeline(&common)?;
            for split in Split::ALL {
                p.corpus(split)?;
            }
            finish(&p)?;
        }
        Command::Mix {
            action: Some(MixAction::Synth { scenes, manifest, n, count, intruded, regime, out, seed }),
            ..
        } => {
            let bank = read_rir_bank(&scenes)?;
            let rirs = (0..bank.records.len()).map(|i| SceneRirs::load(&bank, i)).collect::<Result<Vec<_>, _>>()?;
            let corpus = CorpusManifest::load(&manifest)?;
            let cfg = if intruded || regime == Regime::Faint {
                ScenarioConfig::ablation(n, intruded, regime)
            } else {
                ScenarioConfig::standard(n)
            };
            let entries = build_dataset(&rirs, &corpus, &cfg, count, seed, &out)?;
            println!("{} mixtures written to {}", entries.len(), out.display());
        }
        Command::Mix { common, action: None } => {
            let mut p = pipeline(&common)?;
            p.prepare_data()?;
            finish(&p)?;
        }
        Command::Train { common } => {
            let mut p = pipeline(&common)?;
            let model = p.cfg.model.clone();
            let trained = p.train(&model)?;
            println!("checkpoint sha256 {}", trained.checkpoint_sha256);
            finish(&p)?;
        }
        Command::Evaluate { ckpt: Some(ckpt), manifest: Some(manifest), out: Some(out), common } => {
            let stft = load_config(&common)?.trainer.stft;
            let model = load_checkpoint::<f32>(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?.model;
            let dir = dataset_dir(&manifest);
            let entries = read_dataset(&dir)?;
            let report = evaluate_dataset(&model, &dir, &entries, &stft);
            report.write(&out)?;
            for s in &report.summary {
                println!("{}: SI-SDR {:.2} dB, SI-SDRi {:.2} dB over {} samples", s.scenario, s.mean_si_sdr, s.mean_si_sdri, s.count);
            }
        }
        Command::Evaluate { ckpt: Some(_), .. } => bail!("--ckpt needs --manifest and --out"),
        Command::Evaluate { common, .. } => {
            let mut p = pipeline(&common)?;
            print!("{}", to_table(&p.run()?));
            println!("{}", p.root().display());
        }
        Command::Ablate { common } => {
            let mut p = pipeline(&common)?;
            print!("{}", to_table(&p.ablate()?));
            println!("{}", p.root().display());
        }
        Command::Run { common } => {
            let mut p = pipeline(&common)?;
            print!("{}", to_table(&p.run()?));
            println!("{}", p.root().display());
        }
        Command::Config { common } => print!("{}", load_config(&common)?.to_toml()?),
    }
    Ok(())
}
