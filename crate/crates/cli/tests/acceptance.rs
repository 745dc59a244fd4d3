//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `NSX_ACCEPTANCE_ONLY=1,4,7` restricts the run to the listed criteria.

use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::{Array3, Axis};
use nsx_cli::config::{SetSpec, Split};
use nsx_cli::{ExperimentConfig, Pipeline};
use nsx_core::acoustics::{estimate_rt60, generate_rir, sample_room_scene, Regime, RirConfig, SceneConfig};
use nsx_core::corpus::surrogate::{write_surrogate_corpus, SurrogateSpec};
use nsx_core::corpus::{scan_corpus, AudioCache, CorpusManifest, Partition, ScanOptions};
use nsx_core::mixer::{make_mixture, read_dataset, ScenarioConfig, SceneRirs};
use nsx_core::signal::{istft, si_sdr, si_sdr_improvement, stft, StftConfig};
use nsx_nn::autograd::Tape;
use nsx_nn::model::{load_checkpoint, Architecture, Model, ModelConfig};
use nsx_nn::trainer::{evaluate, evaluate_dataset, fit, probe_gradients, Example, TrainConfig, BEST_CHECKPOINT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn surrogate_manifest(dir: &Path, spec: &SurrogateSpec, partition: Partition) -> CorpusManifest {
    write_surrogate_corpus(dir, spec).expect("surrogate corpus");
    scan_corpus(dir, partition, &ScanOptions::default()).expect("scan").0
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean mixture SI-SDR against the near target with the standard recipe.
fn c1_mixture_statistics() -> Outcome {
    const TARGETS: [(usize, f64); 3] = [(2, 5.02), (3, 0.34), (4, -2.48)];
    const TOL_DB: f64 = 1.5;
    const PER_CONDITION: usize = 500;
    let dir = tempfile::tempdir().unwrap();
    let spec = SurrogateSpec { speakers: 40, utterances_per_speaker: 3, utterance_seconds: [5.0, 8.0], id_offset: 0, seed: 1 };
    let corpus = surrogate_manifest(dir.path(), &spec, Partition::Test);
    let scenes: Vec<SceneRirs<f32>> = (0..150u64)
        .map(|i| SceneRirs::simulate(SceneConfig::default().sample(1000 + i, Regime::Normal).unwrap(), &RirConfig::default()).unwrap())
        .collect();
    let cache = AudioCache::new();
    let mut means = Vec::new();
    for (n, _) in TARGETS {
        let cfg = ScenarioConfig::standard(n);
        let v: Vec<f64> = (0..PER_CONDITION)
            .map(|i| {
                let s = make_mixture(&scenes[i % scenes.len()], &corpus, &cache, &cfg, i as u64 * 7 + n as u64).unwrap();
                si_sdr(&s.mixture, &s.target).unwrap() as f64
            })
            .collect();
        means.push(mean(&v));
    }
    let within = TARGETS.iter().zip(&means).all(|((_, t), m)| (m - t).abs() <= TOL_DB);
    let ordered = means[0] > means[1] && means[1] > means[2];
    check(
        within && ordered,
        format!(
            "{PER_CONDITION} mixtures each: 2spk {:.2} (5.02), 3spk {:.2} (0.34), 4spk {:.2} (-2.48) dB, tolerance {TOL_DB} dB, strict ordering {ordered}",
            means[0], means[1], means[2]
        ),
    )
}

fn c2_rir_physics() -> Outcome {
    let cfg = RirConfig::default();
    let (mut total, mut within, mut causal) = (0, 0, 0);
    for (regime, base) in [(Regime::Normal, 5000u64), (Regime::Faint, 6000)] {
        for s in 0..20 {
            let scene = sample_room_scene(base + s, regime).unwrap();
            for k in 0..scene.source_positions.len() {
                let ir = generate_rir::<f64>(&scene, k, &cfg).unwrap();
                let est = estimate_rt60(&ir.samples, cfg.fs).unwrap();
                total += 1;
                within += usize::from((est - scene.rt60).abs() <= 0.2 * scene.rt60);
                causal += usize::from(ir.samples[..ir.direct_arrival_floor()].iter().all(|&v| v == 0.0));
            }
        }
    }
    let frac = within as f64 / total as f64;
    check(
        total >= 200 && frac >= 0.9 && causal == total,
        format!("{total} RIRs (half normal, half faint): RT60 within 20% for {within} ({:.1}%), zero pre-direct energy for {causal}", 100.0 * frac),
    )
}

fn c3_stft_round_trip() -> Outcome {
    let cfg = StftConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x: Vec<f64> = (0..5 * 16_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let spec = stft(&x, &cfg).unwrap();
        let y = istft(spec.view(), x.len(), &cfg).unwrap();
        worst = x.iter().zip(&y).fold(worst, |m, (a, b)| m.max((a - b).abs()));
    }
    check(worst < 1e-6, format!("100 signals of 5 s, max abs error {worst:.3e} (< 1e-6)"))
}

fn c4_si_sdr_kernel() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut drift = 0.0f64;
    for _ in 0..50 {
        let r: Vec<f64> = (0..4000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e: Vec<f64> = r.iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect();
        let base = si_sdr(&e, &r).unwrap();
        for scale in [1e-3, 0.5, 7.0, 1e3] {
            let scaled: Vec<f64> = e.iter().map(|v| v * scale).collect();
            drift = drift.max((si_sdr(&scaled, &r).unwrap() - base).abs());
        }
    }
    let hand = si_sdr(&[1.0f64, 1.0], &[1.0, 0.0]).unwrap();
    let mixture: Vec<f64> = (0..4000).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let target: Vec<f64> = mixture.iter().map(|v| v * 0.5 + rng.gen_range(-0.1..0.1)).collect();
    let improvement = si_sdr_improvement(&mixture, &mixture, &target).unwrap();
    check(
        drift <= 1e-6 && hand == 0.0 && improvement == 0.0,
        format!("scale drift {drift:.2e} dB, [1,1] vs [1,0] = {hand} dB, mixture-as-estimate SI-SDRi = {improvement}"),
    )
}

fn c5_architecture() -> Outcome {
    let base = ModelConfig { speakers: 8, ..ModelConfig::default() };
    let model = Model::<f32>::new(base.clone(), 5).unwrap();
    let mut shapes = Vec::new();
    for t in [1, 10, 626] {
        let x = Array3::<f32>::from_shape_fn((2, base.bins, t), |(c, f, k)| ((c * 31 + f * 7 + k) as f32 * 0.13).sin());
        let y = model.infer(x.view()).unwrap();
        shapes.push(y.dim() == (2, base.bins, t) && y.iter().all(|v| v.is_finite()));
    }
    let tape = Tape::inference();
    let p = model.params.bind(&tape);
    let x = Array3::<f32>::from_shape_fn((2, base.bins, 10), |(c, f, k)| ((c * 17 + f * 3 + k) as f32 * 0.29).cos());
    let out = model.forward_inspect(&tape, &p, &tape.constant(x.clone().into_dyn())).unwrap();
    let mut worst = 0.0f32;
    for map in &out.attention {
        let last = Axis(map.weights.ndim() - 1);
        for s in map.weights.sum_axis(last).iter() {
            worst = worst.max((s - 1.0).abs());
        }
    }
    let expected_maps = 2 * base.blocks;
    let variants = [(true, false, false), (false, true, false), (false, false, true), (true, false, true)];
    let mut ran = 0;
    for (se, t_att, f_att) in variants {
        let cfg = ModelConfig { ablate_se: se, ablate_t_att: t_att, ablate_f_att: f_att, ..base.clone() };
        let m = Model::<f32>::new(cfg, 6).unwrap();
        let y = m.infer(x.view()).unwrap();
        ran += usize::from(y.dim() == x.dim() && y.iter().all(|v| v.is_finite()));
    }
    for arch in [Architecture::Unet, Architecture::Lstm] {
        let m = Model::<f32>::new(ModelConfig { architecture: arch, ..base.clone() }, 7).unwrap();
        ran += usize::from(m.infer(x.view()).unwrap().dim() == x.dim());
    }
    check(
        shapes.iter().all(|&s| s) && out.attention.len() == expected_maps && worst <= 1e-5 && ran == variants.len() + 2,
        format!(
            "shape kept for T=1/10/626: {shapes:?}; {} attention maps, max |row sum - 1| {worst:.2e}; {ran}/{} variants ran",
            out.attention.len(),
            variants.len() + 2
        ),
    )
}

fn c6_gradients() -> Outcome {
    let t0 = Instant::now();
    let cfg = ModelConfig { blocks: 1, channels: 4, att_dim: 2, heads: 2, lstm_hidden: Some(4), bins: 17, speakers: 3, ..ModelConfig::default() };
    let model = Model::<f64>::new(cfg, 11).unwrap();
    let target: Vec<f64> = (0..400).map(|i| (i as f64 * 0.09).sin() * (i as f64 * 0.013).cos()).collect();
    let mixture: Vec<f64> = target.iter().enumerate().map(|(i, v)| v + 0.4 * (i as f64 * 0.31).sin()).collect();
    let ex = Example { id: "g".into(), scenario: "grad".into(), mixture, target, label: Some(1) };
    let tc = TrainConfig { stft: StftConfig::with_bins(17), ..TrainConfig::default() };
    let probes = probe_gradients(&model, &ex, &tc, 12, 1e-4, 6).unwrap();
    let worst = probes.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    let elapsed = t0.elapsed();
    check(
        probes.len() >= 10 && worst < 1e-3 && elapsed < Duration::from_secs(300),
        format!("{} parameters, max relative error {worst:.2e} (< 1e-3), {:.1} s", probes.len(), elapsed.as_secs_f64()),
    )
}

fn c7_overfit() -> Outcome {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let spec = SurrogateSpec { speakers: 6, utterances_per_speaker: 2, utterance_seconds: [2.0, 3.0], id_offset: 0, seed: 1 };
    let corpus = surrogate_manifest(dir.path(), &spec, Partition::Train);
    let cache = AudioCache::new();
    let scenario = ScenarioConfig { mixture_length: 0.5, ..ScenarioConfig::standard(2) };
    let examples: Vec<Example<f32>> = (0..4u64)
        .map(|i| {
            let scene = SceneConfig::default().sample(i, Regime::Normal).unwrap();
            let rirs = SceneRirs::<f32>::simulate(scene, &RirConfig::default()).unwrap();
            let s = make_mixture(&rirs, &corpus, &cache, &scenario, 100 + i).unwrap();
            Example::from_sample(format!("s{i}"), s, true)
        })
        .collect();
    let mc = ModelConfig {
        blocks: 1,
        channels: 4,
        att_dim: 2,
        heads: 2,
        lstm_hidden: Some(4),
        speakers: corpus.num_speakers(),
        ..ModelConfig::default()
    };
    const STEPS: usize = 500;
    let tc = TrainConfig {
        batch_size: 4,
        lr: 0.01,
        lr_floor_ratio: 1.0,
        weight_decay: 0.0,
        max_epochs: STEPS,
        patience: STEPS,
        max_steps: Some(STEPS),
        ..TrainConfig::default()
    };
    let mut model = Model::<f32>::new(mc, 0).unwrap();
    let report = fit(&mut model, &examples, &examples, &tc, None, |_| {}).unwrap();
    let sisdri = evaluate(&model, &examples, &tc.stft).mean_si_sdri();
    let (first, last) = (report.step_losses[0], *report.step_losses.last().unwrap());
    let elapsed = t0.elapsed();
    check(
        report.step_losses.len() == STEPS && sisdri >= 5.0 && last < first && elapsed < Duration::from_secs(1800),
        format!(
            "{} steps, train SI-SDRi {sisdri:.2} dB (>= 5), loss {first:.3} -> {last:.3}, {:.0} s",
            report.step_losses.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn short(mut s: ScenarioConfig, seconds: f64) -> ScenarioConfig {
    s.mixture_length = seconds;
    s.intruder_length = [0.2 * seconds, 0.6 * seconds];
    s
}

/// Shared desk-scale budget for the comparative checks.
fn comparison_config(root: &Path) -> ExperimentConfig {
    let secs = 0.5;
    let mut cfg = ExperimentConfig { experiment_id: "compare".into(), output_root: root.to_path_buf(), ..ExperimentConfig::default() };
    cfg.scenario.train = vec![
        SetSpec::new(300, short(ScenarioConfig::standard(2), secs)),
        SetSpec::new(300, short(ScenarioConfig::ablation(2, true, Regime::Normal), secs)),
    ];
    cfg.scenario.dev = vec![SetSpec::new(100, short(ScenarioConfig::standard(2), secs))];
    cfg.scenario.test = vec![SetSpec::new(100, short(ScenarioConfig::ablation(2, true, Regime::Normal), secs))];
    cfg.model = ModelConfig { channels: 4, blocks: 2, lstm_hidden: Some(8), ..cfg.model };
    cfg.trainer = TrainConfig { lr: 3e-3, max_epochs: 8, patience: 8, ..cfg.trainer };
    cfg
}

struct Comparison {
    dev: Vec<(String, f64)>,
    intruded: Vec<(String, f64)>,
}

fn run_comparison() -> Result<Comparison, String> {
    let dir = tempfile::tempdir().unwrap();
    let cfg = comparison_config(dir.path());
    let mut p = Pipeline::new(cfg.clone()).map_err(|e| e.to_string())?.quiet(true);
    let dev_sets = p.datasets(Split::Dev).map_err(|e| e.to_string())?;
    let test_set = cfg.scenario.test[0].clone();
    let mut out = Comparison { dev: Vec::new(), intruded: Vec::new() };
    for variant in [nsx_cli::Variant::Full, nsx_cli::Variant::NoSe, nsx_cli::Variant::Unet, nsx_cli::Variant::Lstm] {
        let trained = p.train(&variant.apply(&cfg.model)).map_err(|e| e.to_string())?;
        let model = load_checkpoint::<f32>(&trained.dir.join(BEST_CHECKPOINT)).map_err(|e| e.to_string())?.model;
        let (_, dev_dir, _) = &dev_sets[0];
        let entries = read_dataset(dev_dir).map_err(|e| e.to_string())?;
        let dev = evaluate_dataset(&model, dev_dir, &entries, &cfg.trainer.stft).mean_si_sdri();
        let test = p.evaluate(&trained, &test_set).map_err(|e| e.to_string())?.mean_si_sdri();
        out.dev.push((trained.config.variant(), dev));
        out.intruded.push((trained.config.variant(), test));
    }
    Ok(out)
}

fn table(rows: &[(String, f64)]) -> String {
    rows.iter().map(|(k, v)| format!("{k} {v:.2}")).collect::<Vec<_>>().join(", ")
}

fn c8_comparative(c: &Comparison) -> Outcome {
    let get = |k: &str| c.dev.iter().find(|(v, _)| v == k).map(|x| x.1).unwrap_or(f64::NAN);
    let (ns, unet, lstm) = (get("full"), get("unet"), get("lstm"));
    check(ns > unet && ns > lstm, format!("dev SI-SDRi dB: {}", table(&c.dev)))
}

fn c9_intrusion(c: &Comparison) -> Outcome {
    let get = |k: &str| c.intruded.iter().find(|(v, _)| v == k).map(|x| x.1).unwrap_or(f64::NAN);
    let (full, no_se) = (get("full"), get("w/o SE"));
    check(full >= no_se, format!("intruded test SI-SDRi dB: full {full:.2}, w/o SE {no_se:.2}"))
}

fn c10_reproducibility() -> Outcome {
    let runs: Vec<(tempfile::TempDir, Vec<nsx_cli::ReportRow>)> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let cfg = ExperimentConfig { output_root: dir.path().to_path_buf(), ..ExperimentConfig::smoke() };
            let rows = Pipeline::new(cfg).unwrap().quiet(true).run().unwrap();
            (dir, rows)
        })
        .collect();
    let root = |i: usize| runs[i].0.path().join("smoke");
    let mut manifests = 0;
    let mut identical = true;
    for split in Split::ALL {
        for set in ExperimentConfig::smoke().scenario.sets(split) {
            let rel = Path::new("mix").join(split.as_str()).join(set.key()).join(nsx_core::mixer::MANIFEST_FILE);
            let a = std::fs::read(root(0).join(&rel)).unwrap();
            let b = std::fs::read(root(1).join(&rel)).unwrap();
            identical &= a == b;
            manifests += 1;
        }
    }
    for split in Split::ALL {
        let rel = Path::new("corpus").join(split.as_str()).join("manifest.json");
        identical &= std::fs::read(root(0).join(&rel)).unwrap() == std::fs::read(root(1).join(&rel)).unwrap();
        manifests += 1;
    }
    let metrics_equal = runs[0].1 == runs[1].1;
    check(
        identical && metrics_equal,
        format!("{manifests} manifests bit-identical: {identical}; {} metric rows and checkpoint hashes equal: {metrics_equal}", runs[0].1.len()),
    )
}

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("NSX_ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |id: usize| only.as_ref().is_none_or(|o| o.contains(&id));
    let (mut failures, mut ran) = (0, 0);
    let mut report = |id: usize, name: &str, outcome: Outcome, elapsed: Duration| {
        ran += 1;
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {id:>2} {name}: {detail} [{:.0} s]", elapsed.as_secs_f64());
    };
    let simple: [(usize, &str, fn() -> Outcome); 7] = [
        (1, "mixture SI-SDR statistics", c1_mixture_statistics),
        (2, "RIR physics", c2_rir_physics),
        (3, "STFT round trip", c3_stft_round_trip),
        (4, "SI-SDR kernel", c4_si_sdr_kernel),
        (5, "architecture contracts", c5_architecture),
        (6, "gradient correctness", c6_gradients),
        (7, "learning smoke test", c7_overfit),
    ];
    for (id, name, f) in simple {
        if wanted(id) {
            let t = Instant::now();
            report(id, name, f(), t.elapsed());
        }
    }
    if wanted(8) || wanted(9) {
        let t = Instant::now();
        let comparison = run_comparison();
        let elapsed = t.elapsed();
        for (id, name, f) in [
            (8, "comparative smoke test", c8_comparative as fn(&Comparison) -> Outcome),
            (9, "intrusion robustness direction", c9_intrusion),
        ] {
            if wanted(id) {
                let outcome = comparison.as_ref().map_err(Clone::clone).and_then(f);
                report(id, name, outcome, elapsed);
            }
        }
    }
    if wanted(10) {
        let t = Instant::now();
        report(10, "reproducibility", c10_reproducibility(), t.elapsed());
    }
    println!("{} of {ran} criteria passed", ran - failures);
    // FAIL lines are reported, not hidden; the exit code only gates in strict mode
    if failures > 0 && std::env::var_os("NSX_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
