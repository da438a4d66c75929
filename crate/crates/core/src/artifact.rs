//! Trained model artifacts: everything `route` needs, tied to the config
//! that produced it by hash.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cate::{CateModel, LearnerKind};
use crate::config::ExperimentConfig;
use crate::data::Query;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::harness::{fit_shift_models, load_pool, prepare_round, quality_spec, round_data};
use crate::regress::Projection;
use crate::router::{decide, fit_meta_router_with, CostModel, Normalization, QualityGainModel, RoutingDecision};
use crate::seed::{self, stream};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: u32,
    pub config_hash: String,
    pub learner: LearnerKind,
    /// Applied to raw query embeddings before either model.
    pub projection: Option<Projection>,
    /// Scale applied to GS outcomes before fitting; `m_hat` lives on it.
    pub normalization: Normalization,
    pub cost: CostModel,
    pub cate: CateModel,
    pub quality: QualityGainModel,
}

impl ModelArtifact {
    /// Embedding dimension expected from queries.
    pub fn input_dim(&self) -> usize {
        match &self.projection {
            Some(p) => p.input_dim(),
            None => self.quality.dim(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let a: ModelArtifact = serde_json::from_str(&text)
            .map_err(|e| Error::Artifact(format!("{}: {e}", path.display())))?;
        if a.schema_version != SCHEMA_VERSION {
            return Err(Error::Artifact(format!(
                "{}: schema version {} (this build reads {SCHEMA_VERSION})",
                path.display(),
                a.schema_version
            )));
        }
        Ok(a)
    }

    /// Refuse an artifact trained under a different config.
    pub fn check_config(&self, cfg: &ExperimentConfig) -> Result<()> {
        let h = cfg.hash();
        if h != self.config_hash {
            return Err(Error::Artifact(format!(
                "trained under config hash {}, but the supplied config hashes to {h}",
                self.config_hash
            )));
        }
        Ok(())
    }

    /// `m_hat` for raw (unprojected) queries.
    pub fn predict(&self, queries: &[Query]) -> Result<Vec<f64>> {
        let dim = self.input_dim();
        let x = queries
            .iter()
            .map(|q| {
                if q.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: q.dim(),
                        context: Some(format!("query `{}`", q.id)),
                    });
                }
                match &self.projection {
                    Some(p) => p.apply(&q.embedding),
                    None => Ok(q.embedding.clone()),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        self.quality.predict(&x)
    }

    pub fn route(&self, queries: &[Query], w: f64) -> Result<Vec<RoutingDecision>> {
        let m = self.predict(queries)?;
        m.iter().zip(queries).map(|(m, q)| decide(*m, w, &self.cost, q)).collect()
    }
}

/// Fit the shift and quality models on all of the round-0 training data
/// (no test set is held out), using the first configured learner.
pub fn train(cfg: &ExperimentConfig, exec: Execution) -> Result<ModelArtifact> {
    cfg.validate()?;
    let learner = *cfg.learners.first().ok_or_else(|| Error::config("learners", "at least one learner is required"))?;
    let mut one = cfg.clone();
    one.learners = vec![learner];

    let pool = load_pool(cfg)?;
    let mut d = round_data(cfg, 0, pool.as_ref(), false)?;
    if d.train_pb.is_empty() {
        return Err(Error::Empty("training needs PB samples".into()));
    }
    let (projection, normalization) = prepare_round(cfg, &mut d)?;
    let round_seed = seed::derive(cfg.seed, stream::ROUND, 0);
    let cate = fit_shift_models(&one, &d, round_seed, exec)?.remove(0);
    let quality = fit_meta_router_with(&d.train_gs, &d.train_pb, &cate, &quality_spec(cfg, round_seed), exec)?
        .with_normalization(normalization);
    Ok(ModelArtifact {
        schema_version: SCHEMA_VERSION,
        config_hash: cfg.hash(),
        learner,
        projection,
        normalization,
        cost: cfg.cost,
        cate,
        quality,
    })
}
