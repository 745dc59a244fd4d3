use nsx_core::acoustics::{Regime, RirConfig, SceneConfig};
use nsx_core::corpus::surrogate::{write_surrogate_corpus, SurrogateSpec};
use nsx_core::corpus::{scan_corpus, AudioCache, Partition, ScanOptions};
use nsx_core::mixer::{make_mixture, ScenarioConfig, SceneRirs};
use nsx_nn::model::{Architecture, Model, ModelConfig};
use nsx_nn::trainer::{evaluate, fit, Example, TrainConfig};

fn sample() -> Example<f32> {
    let dir = tempfile::tempdir().unwrap();
    let spec = SurrogateSpec { speakers: 4, utterances_per_speaker: 2, utterance_seconds: [2.0, 3.0], id_offset: 0, seed: 1 };
    write_surrogate_corpus(dir.path(), &spec).unwrap();
    let (corpus, _) = scan_corpus(dir.path(), Partition::Train, &ScanOptions::default()).unwrap();
    let scene = SceneConfig::default().sample(0, Regime::Normal).unwrap();
    let rirs = SceneRirs::<f32>::simulate(scene, &RirConfig::default()).unwrap();
    let scenario = ScenarioConfig { mixture_length: 0.5, ..ScenarioConfig::standard(2) };
    let s = make_mixture(&rirs, &corpus, &AudioCache::new(), &scenario, 100).unwrap();
    Example::from_sample("s0", s, false)
}

#[test]
fn lstm_baseline_overfits_one_sample() {
    let ex = vec![sample()];
    let mc = ModelConfig { architecture: Architecture::Lstm, lstm_layers: 2, lstm_units: 32, ..ModelConfig::default() };
    let tc = TrainConfig {
        batch_size: 1,
        lr: 3e-3,
        lr_floor_ratio: 1.0,
        weight_decay: 0.0,
        max_epochs: 200,
        patience: 200,
        max_steps: Some(200),
        ..TrainConfig::default()
    };
    let mut model = Model::<f32>::new(mc, 0).unwrap();
    let report = fit(&mut model, &ex, &ex, &tc, None, |_| {}).unwrap();
    let sisdri = evaluate(&model, &ex, &tc.stft).mean_si_sdri();
    assert!(sisdri >= 5.0, "SI-SDRi {sisdri}");
    assert!(report.step_losses.last().unwrap() < &report.step_losses[0]);
}
