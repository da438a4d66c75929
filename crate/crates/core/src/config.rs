//! Experiment configuration, read from TOML.
//!
//! Every table rejects unknown keys. Omitted keys take the defaults listed
//! on each field. Exactly one data source must be given: `dataset` (a JSONL
//! pool) or a `[synthetic]` table.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cate::LearnerKind;
use crate::error::{Error, Result};
use crate::regress::RegressorSpec;
use crate::router::{CostModel, NormalizationKind};
use crate::synthetic::SynthConfig;

pub const SEED_ENV: &str = "METAROUTER_SEED";

/// Regressor for each estimation role.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressorConfig {
    /// Shift function `Delta`.
    pub shift: RegressorSpec,
    /// Quality-gain model `m` for every router.
    pub quality: RegressorSpec,
    /// Propensity `p`.
    pub propensity: RegressorSpec,
    /// Outcome nuisances `gamma`, `mu_0`, `mu_1`.
    pub outcome: RegressorSpec,
}

impl RegressorConfig {
    /// All four roles share one spec.
    pub fn uniform(spec: RegressorSpec) -> Self {
        RegressorConfig {
            shift: spec.clone(),
            quality: spec.clone(),
            propensity: spec.clone(),
            outcome: spec,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub n_test: usize,
    pub n_gs_train: usize,
    /// PB training size. Dataset mode: cap on the PB training set (all
    /// remaining by default). Synthetic mode: number of PB samples, by
    /// default `round(n_gs_train * (1 - kappa) / kappa)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_pb_train: Option<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            n_test: 500,
            n_gs_train: 100,
            n_pb_train: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_rounds")]
    pub rounds: usize,
    /// Run rounds, folds and trees on the thread pool.
    #[serde(default = "d_true")]
    pub parallel: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca_dim: Option<usize>,
    #[serde(default)]
    pub normalization: NormalizationKind,
    #[serde(default = "d_learners")]
    pub learners: Vec<LearnerKind>,
    /// Number of steps in each router's threshold grid.
    #[serde(default = "d_grid")]
    pub grid_size: usize,
    #[serde(default = "d_reps")]
    pub random_reps: usize,
    /// Failed rounds tolerated before the experiment aborts.
    #[serde(default)]
    pub failure_budget: usize,
    #[serde(default = "d_folds")]
    pub folds: usize,
    #[serde(default = "d_clip")]
    pub clip: f64,
    #[serde(default = "d_floor")]
    pub resid_floor: f64,
    #[serde(default)]
    pub composed_gamma: bool,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default)]
    pub regressors: RegressorConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SynthConfig>,
    /// Output directory, used when the command line does not give one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn d_rounds() -> usize {
    1
}
fn d_true() -> bool {
    true
}
fn d_learners() -> Vec<LearnerKind> {
    vec![LearnerKind::R, LearnerKind::Dr]
}
fn d_grid() -> usize {
    20
}
fn d_reps() -> usize {
    200
}
fn d_folds() -> usize {
    5
}
fn d_clip() -> f64 {
    0.01
}
fn d_floor() -> f64 {
    1e-6
}

/// The data source of an experiment.
#[derive(Debug, Clone, Copy)]
pub enum DataSource<'a> {
    Dataset(&'a Path),
    Synthetic(&'a SynthConfig),
}

impl ExperimentConfig {
    /// Defaults everywhere, with the given data source.
    pub fn synthetic(synth: SynthConfig) -> Self {
        let mut c: ExperimentConfig = toml::from_str("[synthetic]").expect("defaults parse");
        c.synthetic = Some(synth);
        c
    }

    pub fn source(&self) -> Result<DataSource<'_>> {
        match (&self.dataset, &self.synthetic) {
            (Some(p), None) => Ok(DataSource::Dataset(p)),
            (None, Some(s)) => Ok(DataSource::Synthetic(s)),
            (Some(_), Some(_)) => Err(Error::config("dataset", "give either `dataset` or `[synthetic]`, not both")),
            (None, None) => Err(Error::config("dataset", "a data source is required: `dataset` or `[synthetic]`")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.source()?;
        let positive = |v: usize, key: &str| {
            if v == 0 {
                Err(Error::config(key, "must be >= 1"))
            } else {
                Ok(())
            }
        };
        positive(self.rounds, "rounds")?;
        positive(self.grid_size, "grid_size")?;
        positive(self.random_reps, "random_reps")?;
        positive(self.folds, "folds")?;
        positive(self.split.n_test, "split.n_test")?;
        positive(self.split.n_gs_train, "split.n_gs_train")?;
        if let Some(d) = self.pca_dim {
            positive(d, "pca_dim")?;
        }
        if !(self.clip > 0.0 && self.clip < 0.5) {
            return Err(Error::config("clip", "must lie in (0, 0.5)"));
        }
        if !(self.resid_floor > 0.0 && self.resid_floor.is_finite()) {
            return Err(Error::config("resid_floor", "must be finite and > 0"));
        }
        if self.learners.is_empty() {
            return Err(Error::config("learners", "list at least one of \"r\", \"dr\""));
        }
        if self.learners.len() == 2 && self.learners[0] == self.learners[1] {
            return Err(Error::config("learners", "duplicate learner"));
        }
        self.cost.validate("cost")?;
        self.regressors.shift.validate("regressors.shift")?;
        self.regressors.quality.validate("regressors.quality")?;
        self.regressors.propensity.validate("regressors.propensity")?;
        self.regressors.outcome.validate("regressors.outcome")?;
        if let Some(s) = &self.synthetic {
            s.validate("synthetic")?;
            if let Some(d) = self.pca_dim {
                if d > s.dim {
                    return Err(Error::config("pca_dim", format!("exceeds synthetic.dim = {}", s.dim)));
                }
            }
            if self.split.n_pb_train.is_none() && s.kappa == 0.0 {
                return Err(Error::config("split.n_pb_train", "required when synthetic.kappa = 0"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parse and validate TOML text. `origin` names the source in errors.
pub fn parse_config_str(text: &str, origin: &Path) -> Result<ExperimentConfig> {
    let line_of = |span: Option<std::ops::Range<usize>>| {
        span.map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1).unwrap_or(0)
    };
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        line: line_of(e.span()),
        message: e.message().to_string(),
    })?;
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let inner = e.into_inner();
        let line = line_of(inner.span());
        if key.is_empty() || key == "." {
            Error::Parse {
                path: origin.to_path_buf(),
                line,
                message: inner.message().to_string(),
            }
        } else {
            Error::InvalidConfig {
                key,
                message: format!("{} (line {line})", inner.message()),
            }
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, path)
}

/// The seed override from the environment, if set.
pub fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::config(SEED_ENV, format!("not an unsigned integer: `{v}`"))),
        Err(_) => Ok(None),
    }
}
