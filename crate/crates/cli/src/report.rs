//! Result tables (CSV and aligned text) and the figures built from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nsx_nn::trainer::{EpochRecord, HISTORY_FILE};
use serde::{Deserialize, Serialize};

use crate::plot::{bar_chart, line_chart, Series};
use crate::PipelineError;

/// Mean metrics of one model on one scenario, with the provenance needed to
/// reproduce the number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub variant: String,
    pub slug: String,
    pub scenario: String,
    pub count: usize,
    pub failed: usize,
    pub mean_si_sdr: f64,
    pub mean_si_sdr_mixture: f64,
    pub mean_si_sdri: f64,
    pub checkpoint_sha256: String,
    pub config_hash: String,
    pub seed: u64,
}

const CSV_HEADER: &str =
    "variant,slug,scenario,count,failed,mean_si_sdr,mean_si_sdr_mixture,mean_si_sdri,checkpoint_sha256,config_hash,seed";

pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{:.4},{:.4},{:.4},{},{},{}",
            r.variant,
            r.slug,
            r.scenario,
            r.count,
            r.failed,
            r.mean_si_sdr,
            r.mean_si_sdr_mixture,
            r.mean_si_sdri,
            r.checkpoint_sha256,
            r.config_hash,
            r.seed
        )
        .expect("string write");
    }
    out
}

fn scenarios(rows: &[ReportRow]) -> Vec<String> {
    let mut seen = Vec::new();
    for r in rows {
        if !seen.contains(&r.scenario) {
            seen.push(r.scenario.clone());
        }
    }
    seen
}

fn variants(rows: &[ReportRow]) -> Vec<String> {
    let mut seen = Vec::new();
    for r in rows {
        if !seen.contains(&r.variant) {
            seen.push(r.variant.clone());
        }
    }
    seen
}

/// Variants as rows, scenarios as columns, mean SI-SDRi in dB as cells.
pub fn to_table(rows: &[ReportRow]) -> String {
    let cols = scenarios(rows);
    let cell: BTreeMap<(&str, &str), f64> =
        rows.iter().map(|r| ((r.variant.as_str(), r.scenario.as_str()), r.mean_si_sdri)).collect();
    let first = variants(rows).iter().map(String::len).chain(["variant".len()]).max().unwrap_or(7);
    let widths: Vec<usize> = cols.iter().map(|c| c.len().max(8)).collect();
    let mut out = format!("{:<first$}", "variant");
    for (c, w) in cols.iter().zip(&widths) {
        write!(out, "  {c:>w$}").expect("string write");
    }
    out.push('\n');
    for v in variants(rows) {
        write!(out, "{v:<first$}").expect("string write");
        for (c, w) in cols.iter().zip(&widths) {
            match cell.get(&(v.as_str(), c.as_str())) {
                Some(x) => write!(out, "  {x:>w$.2}"),
                None => write!(out, "  {:>w$}", "-"),
            }
            .expect("string write");
        }
        out.push('\n');
    }
    out
}

pub fn read_history(train_dir: &Path) -> Result<Vec<EpochRecord>, PipelineError> {
    let path = train_dir.join(HISTORY_FILE);
    let text = fs::read_to_string(&path).map_err(|source| PipelineError::Io { path: path.clone(), source })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| PipelineError::ConfigFile { path: path.clone(), message: e.to_string() }))
        .collect()
}

fn write(path: PathBuf, text: &str) -> Result<(), PipelineError> {
    fs::write(&path, text).map_err(|source| PipelineError::Io { path, source })
}

/// Writes `results.{csv,txt}`, the SI-SDRi bar chart and the training curves
/// of every model in `curves` (label, training directory) into `dir`.
pub fn write_reports(dir: &Path, rows: &[ReportRow], curves: &[(String, PathBuf)]) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.to_path_buf(), source })?;
    write(dir.join("results.csv"), &to_csv(rows))?;
    write(dir.join("results.txt"), &to_table(rows))?;

    let cats = scenarios(rows);
    let series: Vec<(String, Vec<f64>)> = variants(rows)
        .into_iter()
        .map(|v| {
            let vals = cats
                .iter()
                .map(|c| rows.iter().find(|r| r.variant == v && &r.scenario == c).map_or(f64::NAN, |r| r.mean_si_sdri))
                .collect();
            (v, vals)
        })
        .collect();
    bar_chart(&dir.join("si_sdri.svg"), "Mean SI-SDRi by scenario", "SI-SDRi (dB)", &cats, &series)?;

    let mut csv = String::from("variant,epoch,train_loss,dev_si_sdr,lr\n");
    let mut loss: Vec<Series> = Vec::new();
    let mut dev: Vec<Series> = Vec::new();
    for (label, train_dir) in curves {
        let history = read_history(train_dir)?;
        for h in &history {
            writeln!(csv, "{label},{},{:.6},{:.6},{:.6e}", h.epoch, h.train_loss, h.dev_sisdr, h.lr).expect("string write");
        }
        loss.push((label.clone(), history.iter().map(|h| (h.epoch as f64, h.train_loss)).collect()));
        dev.push((label.clone(), history.iter().map(|h| (h.epoch as f64, h.dev_sisdr)).collect()));
    }
    write(dir.join("training_curves.csv"), &csv)?;
    line_chart(&dir.join("train_loss.svg"), "Training loss", "epoch", "loss", &loss)?;
    line_chart(&dir.join("dev_si_sdr.svg"), "Dev SI-SDR", "epoch", "SI-SDR (dB)", &dev)
}
