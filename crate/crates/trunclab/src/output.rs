//! Pipeline output files: `report.json`, `estimates.csv`, `calibration.csv`
//! and `manifest.json`.
//!
//! The report and the estimates depend only on the config and its seed;
//! wall-clock data lives in the manifest alone.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use trunclab_core::harness::{PipelineConfig, PipelineReport, PipelineStatus};
use trunclab_core::percolation::{Estimate, SEED_RULE};
use trunclab_core::thresholds::CalibrationTable;

use crate::calibration::{self, CalibrationError};

pub const REPORT_FILE: &str = "report.json";
pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const CALIBRATION_FILE: &str = "calibration.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_COPY_FILE: &str = "config.toml";

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.into(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub l: u32,
    pub window: &'static str,
    pub event: &'static str,
    pub value: Option<f64>,
    pub half_width: Option<f64>,
    pub successes: Option<u64>,
    pub trials: u64,
    pub seed: u64,
    pub note: &'static str,
}

fn record(l: u32, window: &'static str, est: Option<&Estimate>, trials: u64, seed: u64) -> EstimateRecord {
    EstimateRecord {
        l,
        window,
        event: "theta",
        value: est.map(|e| e.value),
        half_width: est.map(|e| e.half_width),
        successes: est.map(|e| e.successes),
        trials: est.map_or(trials, |e| e.trials),
        seed,
        note: if est.is_some() { "" } else { "skipped: window too large" },
    }
}

/// One row per `(L, window)`; skipped full windows appear with empty values.
pub fn estimate_records(report: &PipelineReport, trials: u64) -> Vec<EstimateRecord> {
    report
        .theta
        .iter()
        .flat_map(|row| {
            [
                record(row.l, "embedded", Some(&row.embedded), trials, row.seed),
                record(row.l, "full", row.full.as_ref(), trials, row.seed),
            ]
        })
        .collect()
}

pub fn write_estimates<W: Write>(report: &PipelineReport, trials: u64, out: W) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_writer(out);
    let records = estimate_records(report, trials);
    if records.is_empty() {
        w.write_record([
            "l",
            "window",
            "event",
            "value",
            "half_width",
            "successes",
            "trials",
            "seed",
            "note",
        ])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn report_json(report: &PipelineReport) -> Result<String, OutputError> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Timings {
    pub load_ms: u128,
    pub pipeline_ms: u128,
    pub write_ms: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Seeds {
    pub master: u64,
    pub calibration: u64,
    pub theta: BTreeMap<u32, u64>,
    pub containment: BTreeMap<u32, u64>,
    pub rule: &'static str,
}

impl Seeds {
    pub fn of(cfg: &PipelineConfig) -> Self {
        Self {
            master: cfg.master_seed,
            calibration: cfg.calibration_seed(),
            theta: cfg.l_list.iter().map(|&l| (l, cfg.theta_seed(l))).collect(),
            containment: cfg.l_list.iter().map(|&l| (l, cfg.containment_seed(l))).collect(),
            rule: SEED_RULE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Versions {
    pub trunclab: &'static str,
    pub trunclab_core: &'static str,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            trunclab: env!("CARGO_PKG_VERSION"),
            trunclab_core: trunclab_core::VERSION,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub command: Vec<String>,
    pub config_path: String,
    pub config_text: String,
    pub config: PipelineConfig,
    pub seeds: Seeds,
    pub versions: Versions,
    pub threads: usize,
    pub started_unix_s: u64,
    pub timings: Timings,
    pub status: String,
    pub outputs: Vec<&'static str>,
}

pub fn status_line(status: &PipelineStatus) -> String {
    match status {
        PipelineStatus::Passed => "PASSED".into(),
        PipelineStatus::Failed { stage, kind, reason } => format!("FAILED at {stage} ({kind}): {reason}"),
    }
}

/// Write everything except the manifest; returns the file names written.
pub fn write_results(
    dir: &Path,
    config_text: &str,
    cfg: &PipelineConfig,
    report: &PipelineReport,
    calib: &CalibrationTable,
) -> Result<Vec<&'static str>, OutputError> {
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let path = dir.join(REPORT_FILE);
    fs::write(&path, report_json(report)?).map_err(io_at(&path))?;
    let path = dir.join(ESTIMATES_FILE);
    let file = fs::File::create(&path).map_err(io_at(&path))?;
    write_estimates(report, cfg.trials, io::BufWriter::new(file))?;
    calibration::save(calib, &dir.join(CALIBRATION_FILE))?;
    let path = dir.join(CONFIG_COPY_FILE);
    fs::write(&path, config_text).map_err(io_at(&path))?;
    Ok(vec![REPORT_FILE, ESTIMATES_FILE, CALIBRATION_FILE, CONFIG_COPY_FILE])
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), OutputError> {
    let path = dir.join(MANIFEST_FILE);
    let mut s = serde_json::to_string_pretty(manifest)?;
    s.push('\n');
    fs::write(&path, s).map_err(io_at(&path))
}
