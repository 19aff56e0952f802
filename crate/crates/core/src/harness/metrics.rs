//! CSV metrics rows and the JSON run manifest.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::Result;

/// Columns of every metrics CSV, in order.
pub const METRICS_COLUMNS: [&str; 10] = [
    "experiment",
    "seed",
    "timestamp",
    "global_step",
    "wall_clock_s",
    "ho_rate",
    "throughput_bps",
    "mean_value",
    "beta",
    "variant",
];

/// One evaluation point. Empty metric cells mean "not measured at this point".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub experiment: String,
    pub seed: u64,
    /// Seconds since the Unix epoch when the row was produced.
    pub timestamp: u64,
    pub global_step: u64,
    pub wall_clock_s: f64,
    pub ho_rate: Option<f64>,
    pub throughput_bps: Option<f64>,
    pub mean_value: Option<f64>,
    pub beta: f64,
    pub variant: String,
}

pub fn unix_time() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn write_metrics(path: &Path, rows: &[MetricsRecord]) -> Result<()> {
    // The header is written explicitly so that an empty run still has one.
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(File::create(path)?);
    w.write_record(METRICS_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub created_unix: u64,
    pub files: Vec<String>,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn new(experiment: &str, cfg: &ExperimentConfig, files: &[PathBuf]) -> Self {
        Self {
            experiment: experiment.to_string(),
            config_hash: cfg.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            created_unix: unix_time(),
            files: files
                .iter()
                .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
                .collect(),
            config: cfg.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        serde_json::to_writer_pretty(File::create(path)?, self)?;
        Ok(())
    }
}
