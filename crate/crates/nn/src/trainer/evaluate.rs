use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Ix3;
use nsx_core::mixer::{load_sample, DatasetEntry};
use nsx_core::signal::{istft, si_sdr, stft, StftConfig};
use nsx_core::Real;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Example, TrainError};
use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: String,
    pub scenario: String,
    pub si_sdr: Option<f64>,
    pub si_sdr_mixture: Option<f64>,
    pub si_sdri: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub count: usize,
    pub failed: usize,
    pub mean_si_sdr: f64,
    pub mean_si_sdr_mixture: f64,
    pub mean_si_sdri: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: Vec<SampleMetrics>,
    pub summary: Vec<ScenarioSummary>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl EvalReport {
    fn from_samples(samples: Vec<SampleMetrics>) -> Self {
        let mut groups: BTreeMap<&str, Vec<&SampleMetrics>> = BTreeMap::new();
        for s in &samples {
            groups.entry(&s.scenario).or_default().push(s);
        }
        let summary = groups
            .into_iter()
            .map(|(scenario, group)| {
                let ok: Vec<_> = group.iter().filter(|s| s.error.is_none()).collect();
                let col = |f: fn(&SampleMetrics) -> Option<f64>| mean(&ok.iter().filter_map(|s| f(s)).collect::<Vec<_>>());
                ScenarioSummary {
                    scenario: scenario.to_string(),
                    count: ok.len(),
                    failed: group.len() - ok.len(),
                    mean_si_sdr: col(|s| s.si_sdr),
                    mean_si_sdr_mixture: col(|s| s.si_sdr_mixture),
                    mean_si_sdri: col(|s| s.si_sdri),
                }
            })
            .collect();
        Self { samples, summary }
    }

    /// Mean SI-SDRi over every successfully scored sample.
    pub fn mean_si_sdri(&self) -> f64 {
        mean(&self.samples.iter().filter_map(|s| s.si_sdri).collect::<Vec<_>>())
    }

    pub fn mean_si_sdr(&self) -> f64 {
        mean(&self.samples.iter().filter_map(|s| s.si_sdr).collect::<Vec<_>>())
    }

    pub fn scenario(&self, key: &str) -> Option<&ScenarioSummary> {
        self.summary.iter().find(|s| s.scenario == key)
    }

    /// Writes `per_sample.jsonl`, `summary.json` and a tab-separated `summary.tsv`.
    pub fn write(&self, dir: &Path) -> Result<(), TrainError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| TrainError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let per = dir.join("per_sample.jsonl");
        let mut f = fs::File::create(&per).map_err(io(&per))?;
        for s in &self.samples {
            writeln!(f, "{}", serde_json::to_string(s)?).map_err(io(&per))?;
        }
        let sum = dir.join("summary.json");
        fs::write(&sum, serde_json::to_string_pretty(&self.summary)?).map_err(io(&sum))?;
        let tsv = dir.join("summary.tsv");
        let mut t = String::from("scenario\tcount\tfailed\tmean_si_sdr\tmean_si_sdr_mixture\tmean_si_sdri\n");
        for s in &self.summary {
            t.push_str(&format!(
                "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\n",
                s.scenario, s.count, s.failed, s.mean_si_sdr, s.mean_si_sdr_mixture, s.mean_si_sdri
            ));
        }
        fs::write(&tsv, t).map_err(io(&tsv))
    }
}

fn score<T: Real>(ex: &Example<T>, estimate: &[T]) -> Result<(f64, f64), TrainError> {
    let est = si_sdr(estimate, &ex.target)?.to_f64_lossy();
    let mix = si_sdr(&ex.mixture, &ex.target)?.to_f64_lossy();
    Ok((est, mix))
}

fn metrics(id: &str, scenario: &str, r: Result<(f64, f64), String>) -> SampleMetrics {
    match r {
        Ok((est, mix)) => SampleMetrics {
            id: id.into(),
            scenario: scenario.into(),
            si_sdr: Some(est),
            si_sdr_mixture: Some(mix),
            si_sdri: Some(est - mix),
            error: None,
        },
        Err(e) => SampleMetrics {
            id: id.into(),
            scenario: scenario.into(),
            si_sdr: None,
            si_sdr_mixture: None,
            si_sdri: None,
            error: Some(e),
        },
    }
}

/// Scores an arbitrary estimator. Per-sample failures are recorded, not fatal.
pub fn evaluate_with<T: Real, F>(examples: &[Example<T>], estimator: F) -> EvalReport
where
    F: Fn(&Example<T>) -> Result<Vec<T>, TrainError> + Sync,
{
    let samples = examples
        .par_iter()
        .map(|ex| {
            let r = estimator(ex).and_then(|est| score(ex, &est)).map_err(|e| e.to_string());
            metrics(&ex.id, &ex.scenario, r)
        })
        .collect();
    EvalReport::from_samples(samples)
}

/// Waveform estimate of the model for one mixture.
pub fn extract<T: Real>(model: &Model<T>, mixture: &[T], cfg: &StftConfig) -> Result<Vec<T>, TrainError> {
    let spec = stft(mixture, cfg)?;
    let y = model.infer(spec.view())?;
    Ok(istft(y.view().into_dimensionality::<Ix3>().expect("3-d"), mixture.len(), cfg)?)
}

pub fn evaluate<T: Real>(model: &Model<T>, examples: &[Example<T>], cfg: &StftConfig) -> EvalReport {
    evaluate_with(examples, |ex| extract(model, &ex.mixture, cfg))
}

/// Evaluates a generated dataset directory; unreadable samples are reported per sample.
pub fn evaluate_dataset<T: Real>(model: &Model<T>, dir: &Path, entries: &[DatasetEntry], cfg: &StftConfig) -> EvalReport {
    let samples = entries
        .par_iter()
        .map(|entry| {
            let loaded = load_sample::<T>(dir, entry).map_err(|e| e.to_string());
            let scenario = match &loaded {
                Ok(s) => s.scenario.key(),
                Err(_) => format!(
                    "{}spk-{}-{}",
                    entry.n_speakers,
                    entry.regime.as_str(),
                    if entry.intruded { "intruded" } else { "unintruded" }
                ),
            };
            let r = loaded.and_then(|s| {
                let ex = Example::from_sample(entry.sample_id.clone(), s, false);
                extract(model, &ex.mixture, cfg).and_then(|est| score(&ex, &est)).map_err(|e| e.to_string())
            });
            metrics(&entry.sample_id, &scenario, r)
        })
        .collect();
    EvalReport::from_samples(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, ModelConfig};

    fn examples() -> Vec<Example<f64>> {
        (0..6)
            .map(|k| {
                let target: Vec<f64> = (0..800).map(|i| ((i * (k + 3)) as f64 * 0.01).sin()).collect();
                let mixture = target.iter().enumerate().map(|(i, t)| t + 0.5 * ((i * 7) as f64 * 0.13).cos()).collect();
                Example {
                    id: format!("s{k}"),
                    scenario: if k % 2 == 0 { "2spk-faint-unintruded" } else { "3spk-faint-intruded" }.into(),
                    mixture,
                    target,
                    label: None,
                }
            })
            .collect()
    }

    #[test]
    fn mixture_as_estimate_scores_zero_improvement() {
        let r = evaluate_with(&examples(), |ex| Ok(ex.mixture.clone()));
        assert_eq!(r.mean_si_sdri(), 0.0);
        assert_eq!(r.summary.len(), 2);
        assert_eq!(r.scenario("3spk-faint-intruded").unwrap().count, 3);
    }

    #[test]
    fn evaluation_is_pure_and_failures_are_recorded() {
        let cfg = ModelConfig { architecture: Architecture::Unet, unet_filters: vec![2, 2], ..ModelConfig::default() };
        let model = Model::<f64>::new(cfg, 1).unwrap();
        let mut ex = examples();
        ex[5].target.truncate(10);
        let a = evaluate(&model, &ex, &StftConfig::default());
        let b = evaluate(&model, &ex, &StftConfig::default());
        assert_eq!(a, b);
        assert!(a.samples[5].error.is_some());
        assert_eq!(a.scenario("3spk-faint-intruded").unwrap().failed, 1);
        let dir = tempfile::tempdir().unwrap();
        a.write(dir.path()).unwrap();
        let lines = fs::read_to_string(dir.path().join("per_sample.jsonl")).unwrap();
        assert_eq!(lines.lines().count(), 6);
        assert!(dir.path().join("summary.tsv").exists());
    }
}
