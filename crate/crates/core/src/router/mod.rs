//! Quality-gain models and the routing rule.
//!
//! A router estimates the GS quality gain `m(q)` of the primary model over
//! the alternative and sends `q` to the primary model iff
//! `m(q) - w * (C_p(q) - C_a(q)) > 0`. Ties go to the alternative.

mod cost;
mod normalize;

use serde::{Deserialize, Serialize};

use crate::cate::ShiftFunction;
use crate::data::{GsSample, PbSample, Query};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::regress::{fit_regressor_with, RegressionModel, RegressorSpec};

pub use cost::{CostModel, TokenPrice};
pub use normalize::{compute_normalization, Normalization, NormalizationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    #[serde(rename = "M_p")]
    Primary,
    #[serde(rename = "M_a")]
    Alternative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    MetaR,
    MetaDr,
    MetaOracleDelta,
    Pooled,
    GsOnly,
    OracleFullGs,
}

impl Provenance {
    /// Identifier used in result tables.
    pub fn router_id(self) -> &'static str {
        match self {
            Provenance::MetaR => "meta_r",
            Provenance::MetaDr => "meta_dr",
            Provenance::MetaOracleDelta => "meta_oracle_delta",
            Provenance::Pooled => "pooled",
            Provenance::GsOnly => "gs_only",
            Provenance::OracleFullGs => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    Pooled,
    GsOnly,
    OracleFullGs,
}

/// A fitted estimate `m_hat` of the GS quality gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityGainModel {
    pub predictor: RegressionModel,
    pub provenance: Provenance,
    pub normalization: Option<Normalization>,
}

impl QualityGainModel {
    pub fn dim(&self) -> usize {
        self.predictor.dim()
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.predictor.predict(x)
    }

    pub fn with_normalization(mut self, n: Normalization) -> Self {
        self.normalization = Some(n);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub choice: Choice,
    pub decision_value: f64,
    pub w: f64,
    pub cost_gap: f64,
}

/// `m_hat(q) - w * (C_p(q) - C_a(q))`.
pub fn decision_value(m_hat_q: f64, w: f64, cost: &CostModel, q: &Query) -> Result<f64> {
    Ok(m_hat_q - w * cost.cost_gap(q)?)
}

/// Decide for one query given its already-computed `m_hat(q)`.
pub fn decide(m_hat_q: f64, w: f64, cost: &CostModel, q: &Query) -> Result<RoutingDecision> {
    let cost_gap = cost.cost_gap(q)?;
    let value = m_hat_q - w * cost_gap;
    Ok(RoutingDecision {
        choice: if value > 0.0 { Choice::Primary } else { Choice::Alternative },
        decision_value: value,
        w,
        cost_gap,
    })
}

/// Route a query whose embedding is already in the model's input space.
pub fn route(model: &QualityGainModel, q: &Query, w: f64, cost: &CostModel) -> Result<RoutingDecision> {
    decide(model.predictor.predict_one(&q.embedding)?, w, cost, q)
}

/// Pseudo-GS samples `(q', y + Delta(q'))`.
pub fn bias_correct(pb: &[PbSample], delta: &dyn ShiftFunction) -> Result<Vec<GsSample>> {
    pb.iter()
        .map(|p| {
            Ok(GsSample {
                query: p.query.clone(),
                r: p.y + delta.shift(&p.query.embedding)?,
            })
        })
        .collect()
}

fn fit_quality(
    samples: impl Iterator<Item = (Vec<f64>, f64)>,
    spec: &RegressorSpec,
    provenance: Provenance,
    exec: Execution,
) -> Result<QualityGainModel> {
    let (x, y): (Vec<Vec<f64>>, Vec<f64>) = samples.unzip();
    if x.is_empty() {
        return Err(Error::Empty(format!("no training samples for the {} router", provenance.router_id())));
    }
    Ok(QualityGainModel {
        predictor: fit_regressor_with(spec, &x, &y, None, exec)?,
        provenance,
        normalization: None,
    })
}

/// Fit `m_hat` on the GS training set together with the bias-corrected PB
/// set, all samples equally weighted.
pub fn fit_meta_router(
    train_gs: &[GsSample],
    train_pb: &[PbSample],
    delta: &dyn ShiftFunction,
    spec: &RegressorSpec,
) -> Result<QualityGainModel> {
    fit_meta_router_with(train_gs, train_pb, delta, spec, Execution::default())
}

pub fn fit_meta_router_with(
    train_gs: &[GsSample],
    train_pb: &[PbSample],
    delta: &dyn ShiftFunction,
    spec: &RegressorSpec,
    exec: Execution,
) -> Result<QualityGainModel> {
    let corrected = bias_correct(train_pb, delta)?;
    let samples = train_gs.iter().chain(&corrected).map(|g| (g.query.embedding.clone(), g.r));
    fit_quality(samples, spec, delta.provenance(), exec)
}

/// Inputs for the baseline routers. `pb_gold[i]` is the GS outcome of
/// `train_pb[i]`, needed only by the oracle.
#[derive(Debug, Clone, Copy)]
pub struct BaselineInputs<'a> {
    pub train_gs: &'a [GsSample],
    pub train_pb: &'a [PbSample],
    pub pb_gold: Option<&'a [Option<f64>]>,
}

pub fn fit_baseline_router(
    data: BaselineInputs<'_>,
    mode: BaselineMode,
    spec: &RegressorSpec,
    exec: Execution,
) -> Result<QualityGainModel> {
    let gs = data.train_gs.iter().map(|g| (g.query.embedding.clone(), g.r));
    match mode {
        BaselineMode::GsOnly => fit_quality(gs, spec, Provenance::GsOnly, exec),
        BaselineMode::Pooled => {
            let pb = data.train_pb.iter().map(|p| (p.query.embedding.clone(), p.y));
            fit_quality(gs.chain(pb), spec, Provenance::Pooled, exec)
        }
        BaselineMode::OracleFullGs => {
            let gold = data.pb_gold.unwrap_or(&[]);
            if gold.len() != data.train_pb.len() {
                return Err(Error::MissingOutcome("oracle router needs GS outcomes for every PB query".into()));
            }
            let pb = data
                .train_pb
                .iter()
                .zip(gold)
                .map(|(p, g)| {
                    g.map(|r| (p.query.embedding.clone(), r))
                        .ok_or_else(|| Error::MissingOutcome(format!("no GS outcome for PB query `{}`", p.query.id)))
                })
                .collect::<Result<Vec<_>>>()?;
            fit_quality(gs.chain(pb), spec, Provenance::OracleFullGs, exec)
        }
    }
}
