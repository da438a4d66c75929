//! Shift-function estimation, `Delta(q) = m(q) - eta(q)`, as a conditional
//! average treatment effect of the evaluation mechanism.
//!
//! Both learners consume out-of-fold nuisances and never refit them.
//!
//! * R-learner: minimize `sum (o~_i - t~_i h(s_i))^2`, with `o~ = o - gamma`
//!   and `t~ = t - p`, by regressing `o~ / t~` on `s` with weights `t~^2`.
//! * DR-learner: regress the pseudo-outcome
//!   `phi = (t - p) / (p (1 - p)) * (o - mu_t) + mu_1 - mu_0` on `s`.

use serde::{Deserialize, Serialize};

use crate::data::CombinedSample;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::nuisance::NuisanceEstimates;
use crate::regress::{fit_regressor_with, RegressionModel, RegressorSpec};
use crate::router::Provenance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    R,
    Dr,
}

impl LearnerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::R => "r",
            LearnerKind::Dr => "dr",
        }
    }
}

/// What a CATE model was fitted with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateMeta {
    pub spec: RegressorSpec,
    pub clip: f64,
    pub folds: usize,
    pub resid_floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateModel {
    pub kind: LearnerKind,
    pub predictor: RegressionModel,
    pub meta: CateMeta,
}

impl CateModel {
    pub fn dim(&self) -> usize {
        self.predictor.dim()
    }

    pub fn predict(&self, queries: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.predictor.predict(queries)
    }
}

pub fn predict_cate(model: &CateModel, queries: &[Vec<f64>]) -> Result<Vec<f64>> {
    model.predict(queries)
}

/// Anything that can play the role of `Delta` when correcting PB outcomes.
pub trait ShiftFunction: Sync {
    fn shift(&self, x: &[f64]) -> Result<f64>;

    /// Router provenance for a meta-router built on this shift.
    fn provenance(&self) -> Provenance {
        Provenance::MetaOracleDelta
    }
}

impl ShiftFunction for CateModel {
    fn shift(&self, x: &[f64]) -> Result<f64> {
        self.predictor.predict_one(x)
    }

    fn provenance(&self) -> Provenance {
        match self.kind {
            LearnerKind::R => Provenance::MetaR,
            LearnerKind::Dr => Provenance::MetaDr,
        }
    }
}

/// A known shift function, e.g. the generator's true `m - eta`.
pub struct KnownShift<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> ShiftFunction for KnownShift<F> {
    fn shift(&self, x: &[f64]) -> Result<f64> {
        Ok((self.0)(x))
    }
}

fn check_inputs(data: &[CombinedSample], nu: &NuisanceEstimates) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            available: data.len(),
        });
    }
    if nu.len() != data.len() {
        return Err(Error::LengthMismatch(format!(
            "{} nuisance values for {} samples",
            nu.len(),
            data.len()
        )));
    }
    Ok(())
}

/// Pseudo-targets and weights of the R-learner's weighted-regression
/// reduction. `|t~|` is floored at `resid_floor` in the target only.
pub fn r_learner_targets(
    data: &[CombinedSample],
    nu: &NuisanceEstimates,
    resid_floor: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_inputs(data, nu)?;
    if !(resid_floor > 0.0 && resid_floor.is_finite()) {
        return Err(Error::config("resid_floor", "must be finite and > 0"));
    }
    let mut targets = Vec::with_capacity(data.len());
    let mut weights = Vec::with_capacity(data.len());
    for (i, d) in data.iter().enumerate() {
        let o_res = d.o - nu.gamma_hat[i];
        let t_res = d.t() - nu.p_hat[i];
        let floored = if t_res < 0.0 { -t_res.abs().max(resid_floor) } else { t_res.max(resid_floor) };
        targets.push(o_res / floored);
        weights.push(t_res * t_res);
    }
    if weights.iter().all(|w| *w <= f64::MIN_POSITIVE) {
        return Err(Error::Degenerate("all R-learner weights vanish; the propensity has collapsed".into()));
    }
    Ok((targets, weights))
}

pub fn fit_r_learner(
    data: &[CombinedSample],
    nu: &NuisanceEstimates,
    spec: &RegressorSpec,
    resid_floor: f64,
) -> Result<CateModel> {
    fit_r_learner_with(data, nu, spec, resid_floor, Execution::default())
}

pub fn fit_r_learner_with(
    data: &[CombinedSample],
    nu: &NuisanceEstimates,
    spec: &RegressorSpec,
    resid_floor: f64,
    exec: Execution,
) -> Result<CateModel> {
    let (targets, weights) = r_learner_targets(data, nu, resid_floor)?;
    let x: Vec<Vec<f64>> = data.iter().map(|d| d.s.embedding.clone()).collect();
    Ok(CateModel {
        kind: LearnerKind::R,
        predictor: fit_regressor_with(spec, &x, &targets, Some(&weights), exec)?,
        meta: meta(spec, nu, Some(resid_floor)),
    })
}

/// DR pseudo-outcomes, one per sample.
pub fn dr_pseudo_outcomes(data: &[CombinedSample], nu: &NuisanceEstimates) -> Result<Vec<f64>> {
    check_inputs(data, nu)?;
    data.iter()
        .enumerate()
        .map(|(i, d)| {
            let p = nu.p_hat[i];
            let mu_t = if d.treated { nu.mu1_hat[i] } else { nu.mu0_hat[i] };
            let phi = (d.t() - p) / (p * (1.0 - p)) * (d.o - mu_t) + nu.mu1_hat[i] - nu.mu0_hat[i];
            if phi.is_finite() {
                Ok(phi)
            } else {
                Err(Error::NonFinite(format!("DR pseudo-outcome for sample {i}")))
            }
        })
        .collect()
}

pub fn fit_dr_learner(data: &[CombinedSample], nu: &NuisanceEstimates, spec: &RegressorSpec) -> Result<CateModel> {
    fit_dr_learner_with(data, nu, spec, Execution::default())
}

pub fn fit_dr_learner_with(
    data: &[CombinedSample],
    nu: &NuisanceEstimates,
    spec: &RegressorSpec,
    exec: Execution,
) -> Result<CateModel> {
    let phi = dr_pseudo_outcomes(data, nu)?;
    let x: Vec<Vec<f64>> = data.iter().map(|d| d.s.embedding.clone()).collect();
    Ok(CateModel {
        kind: LearnerKind::Dr,
        predictor: fit_regressor_with(spec, &x, &phi, None, exec)?,
        meta: meta(spec, nu, None),
    })
}

pub fn fit_learner(
    kind: LearnerKind,
    data: &[CombinedSample],
    nu: &NuisanceEstimates,
    spec: &RegressorSpec,
    resid_floor: f64,
    exec: Execution,
) -> Result<CateModel> {
    match kind {
        LearnerKind::R => fit_r_learner_with(data, nu, spec, resid_floor, exec),
        LearnerKind::Dr => fit_dr_learner_with(data, nu, spec, exec),
    }
}

fn meta(spec: &RegressorSpec, nu: &NuisanceEstimates, resid_floor: Option<f64>) -> CateMeta {
    CateMeta {
        spec: spec.clone(),
        clip: nu.clip,
        folds: nu.folds.iter().copied().max().unwrap_or(0),
        resid_floor,
    }
}

/// AIPW estimate of the average effect with its plug-in standard error:
/// the mean and `sd / sqrt(n)` of the DR pseudo-outcomes.
pub fn aipw_ate(data: &[CombinedSample], nu: &NuisanceEstimates) -> Result<(f64, f64)> {
    let phi = dr_pseudo_outcomes(data, nu)?;
    let n = phi.len() as f64;
    let mean = phi.iter().sum::<f64>() / n;
    let var = phi.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}
