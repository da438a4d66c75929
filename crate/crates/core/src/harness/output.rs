//! Experiment results and their on-disk form: `curves.csv`,
//! `aggregate.csv` and `meta.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub router_id: String,
    pub mc_round: usize,
    pub w: f64,
    pub pmur: f64,
    pub te: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub router_id: String,
    pub pmur_bucket: f64,
    pub median_te: f64,
    pub median_eg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMeta {
    pub round: usize,
    pub seed: u64,
    pub normalization_c: f64,
    pub n_test: usize,
    pub n_gs_train: usize,
    pub n_pb_train: usize,
    /// GS share of the synthetic training pool, when generated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_kappa: Option<f64>,
    pub routers: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundFailure {
    pub round: usize,
    pub error: String,
}

/// Run metadata. Holds nothing time- or host-dependent, so reruns with the
/// same config produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMeta {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub rounds_requested: usize,
    pub rounds_completed: usize,
    pub config: ExperimentConfig,
    pub rounds: Vec<RoundMeta>,
    pub failures: Vec<RoundFailure>,
}

impl ExperimentMeta {
    pub fn new(cfg: &ExperimentConfig, rounds: Vec<RoundMeta>, failures: Vec<RoundFailure>) -> Self {
        ExperimentMeta {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            rounds_requested: cfg.rounds,
            rounds_completed: rounds.len(),
            config: cfg.clone(),
            rounds,
            failures,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub curves: Vec<CurveRecord>,
    pub aggregate: Vec<AggregateRow>,
    pub meta: ExperimentMeta,
}

pub const CURVES_FILE: &str = "curves.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const META_FILE: &str = "meta.json";

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Write curve rows in the `curves.csv` format.
pub fn write_curves(path: &Path, rows: &[CurveRecord]) -> Result<()> {
    write_csv(path, rows)
}

impl ResultsTable {
    /// Aggregate rows of one router, in bucket order.
    pub fn router(&self, id: &str) -> Vec<&AggregateRow> {
        self.aggregate.iter().filter(|r| r.router_id == id).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_csv(&dir.join(CURVES_FILE), &self.curves)?;
        write_csv(&dir.join(AGGREGATE_FILE), &self.aggregate)?;
        let meta = dir.join(META_FILE);
        let mut text = serde_json::to_string_pretty(&self.meta)?;
        text.push('\n');
        fs::write(&meta, text).map_err(|e| Error::io(&meta, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta = dir.join(META_FILE);
        let text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        Ok(ResultsTable {
            curves: read_csv(&dir.join(CURVES_FILE))?,
            aggregate: read_csv(&dir.join(AGGREGATE_FILE))?,
            meta: serde_json::from_str(&text)?,
        })
    }
}
