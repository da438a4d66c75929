//! Cross-fitted nuisance functions for the CATE learners: propensity
//! `p(s) = P(t = 1 | s)`, marginal outcome `gamma(s) = E[o | s]` and the
//! arm-conditional outcomes `mu_0(s)`, `mu_1(s)`.
//!
//! With `K > 1` every sample's value comes from a model fitted on the other
//! `K - 1` folds, so no sample's own label reaches its own nuisance value.
//! With `K = 1` a single model is fitted and evaluated on all data.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::CombinedSample;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::regress::{fit_regressor_with, RegressionModel, RegressorSpec};
use crate::seed;

/// Cross-fitting settings shared by all nuisance estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossFit {
    pub folds: usize,
    pub clip: f64,
    pub seed: u64,
    /// Compose `gamma = p * mu_1 + (1 - p) * mu_0` instead of regressing `o`.
    pub composed_gamma: bool,
}

impl Default for CrossFit {
    fn default() -> Self {
        CrossFit {
            folds: 5,
            clip: 0.01,
            seed: 0,
            composed_gamma: false,
        }
    }
}

impl CrossFit {
    pub fn validate(&self) -> Result<()> {
        if self.folds == 0 {
            return Err(Error::config("folds", "must be >= 1"));
        }
        check_clip(self.clip)
    }
}

fn check_clip(clip: f64) -> Result<()> {
    if clip > 0.0 && clip < 0.5 {
        Ok(())
    } else {
        Err(Error::config("clip", format!("must lie in (0, 0.5), got {clip}")))
    }
}

/// Models refitted on the full sample, for evaluating nuisances at new points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceModels {
    pub propensity: RegressionModel,
    pub marginal: RegressionModel,
    pub mu0: RegressionModel,
    pub mu1: RegressionModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceEstimates {
    pub p_hat: Vec<f64>,
    pub gamma_hat: Vec<f64>,
    pub mu0_hat: Vec<f64>,
    pub mu1_hat: Vec<f64>,
    /// Fold id in `1..=K` per sample; all zero for plug-in estimates.
    pub folds: Vec<usize>,
    pub clip: f64,
    pub refit_models: Option<NuisanceModels>,
}

impl NuisanceEstimates {
    /// Wrap externally supplied nuisance values (e.g. the generator's true
    /// functions). `p` is clamped to `[clip, 1 - clip]`.
    pub fn from_parts(p: Vec<f64>, gamma: Vec<f64>, mu0: Vec<f64>, mu1: Vec<f64>, clip: f64) -> Result<Self> {
        check_clip(clip)?;
        let n = p.len();
        if gamma.len() != n || mu0.len() != n || mu1.len() != n {
            return Err(Error::LengthMismatch("nuisance vectors differ in length".into()));
        }
        if p.iter().chain(&gamma).chain(&mu0).chain(&mu1).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("nuisance value".into()));
        }
        Ok(NuisanceEstimates {
            p_hat: p.into_iter().map(|v| v.clamp(clip, 1.0 - clip)).collect(),
            gamma_hat: gamma,
            mu0_hat: mu0,
            mu1_hat: mu1,
            folds: vec![0; n],
            clip,
            refit_models: None,
        })
    }

    pub fn len(&self) -> usize {
        self.p_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_hat.is_empty()
    }
}

/// Balanced fold ids in `1..=k`: a seeded permutation dealt round-robin.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::InsufficientSamples { needed: k.max(1), available: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed, seed::stream::FOLDS, 0)));
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k + 1;
    }
    Ok(folds)
}

/// Out-of-fold predictions of `target` on `s`, training only on samples
/// with `eligible[i]`. Fold `f` uses `spec` re-keyed by `f`.
fn crossfit(
    x: &[Vec<f64>],
    target: &[f64],
    eligible: &[bool],
    folds: &[usize],
    k: usize,
    spec: &RegressorSpec,
    exec: Execution,
) -> Result<Vec<f64>> {
    let n = x.len();
    let fit_on = |train: &dyn Fn(usize) -> bool, salt: u64| -> Result<RegressionModel> {
        let idx: Vec<usize> = (0..n).filter(|&i| eligible[i] && train(i)).collect();
        let xs: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| target[i]).collect();
        fit_regressor_with(&spec.reseeded(salt), &xs, &ys, None, exec)
    };
    if k == 1 {
        return fit_on(&|_| true, 1)?.predict(x);
    }
    let per_fold = exec::map_indexed(exec, k, |f| -> Result<Vec<(usize, f64)>> {
        let fold = f + 1;
        let model = fit_on(&|i| folds[i] != fold, fold as u64)?;
        (0..n)
            .filter(|&i| folds[i] == fold)
            .map(|i| Ok((i, model.predict_one(&x[i])?)))
            .collect()
    });
    let mut out = vec![0.0; n];
    for part in per_fold {
        for (i, v) in part? {
            out[i] = v;
        }
    }
    Ok(out)
}

fn design(data: &[CombinedSample]) -> Result<Vec<Vec<f64>>> {
    if data.is_empty() {
        return Err(Error::Empty("nuisance estimation needs data".into()));
    }
    Ok(data.iter().map(|d| d.s.embedding.clone()).collect())
}

fn folds_for(data: &[CombinedSample], k: usize, seed: u64) -> Result<Vec<usize>> {
    assign_folds(data.len(), k, seed)
}

/// Cross-fitted propensity, clamped to `[clip, 1 - clip]`.
pub fn crossfit_propensity(
    data: &[CombinedSample],
    spec: &RegressorSpec,
    k: usize,
    clip: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    crossfit_propensity_with(data, spec, k, clip, seed, Execution::default())
}

pub fn crossfit_propensity_with(
    data: &[CombinedSample],
    spec: &RegressorSpec,
    k: usize,
    clip: f64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<f64>> {
    check_clip(clip)?;
    let x = design(data)?;
    let t: Vec<f64> = data.iter().map(CombinedSample::t).collect();
    if k > 1 && t.iter().all(|&v| v == t[0]) {
        return Err(Error::Positivity(format!(
            "every sample has t = {}; the propensity is degenerate",
            t[0]
        )));
    }
    let folds = folds_for(data, k, seed)?;
    let raw = crossfit(&x, &t, &vec![true; t.len()], &folds, k, spec, exec)?;
    Ok(raw.into_iter().map(|p| p.clamp(clip, 1.0 - clip)).collect())
}

/// Cross-fitted marginal outcome regression `gamma(s)`.
pub fn crossfit_marginal(data: &[CombinedSample], spec: &RegressorSpec, k: usize, seed: u64) -> Result<Vec<f64>> {
    crossfit_marginal_with(data, spec, k, seed, Execution::default())
}

pub fn crossfit_marginal_with(
    data: &[CombinedSample],
    spec: &RegressorSpec,
    k: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<f64>> {
    let x = design(data)?;
    let o: Vec<f64> = data.iter().map(|d| d.o).collect();
    let folds = folds_for(data, k, seed)?;
    crossfit(&x, &o, &vec![true; o.len()], &folds, k, spec, exec)
}

/// Cross-fitted `(mu_0, mu_1)`, each fitted on its own arm only.
pub fn crossfit_conditional(
    data: &[CombinedSample],
    spec: &RegressorSpec,
    k: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    crossfit_conditional_with(data, spec, k, seed, Execution::default())
}

pub fn crossfit_conditional_with(
    data: &[CombinedSample],
    spec: &RegressorSpec,
    k: usize,
    seed: u64,
    exec: Execution,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let x = design(data)?;
    let o: Vec<f64> = data.iter().map(|d| d.o).collect();
    let treated: Vec<bool> = data.iter().map(|d| d.treated).collect();
    let control: Vec<bool> = treated.iter().map(|t| !t).collect();
    let folds = folds_for(data, k, seed)?;
    for fold in 1..=k {
        let in_complement = |i: usize| k == 1 || folds[i] != fold;
        for (arm, name) in [(&treated, "t = 1"), (&control, "t = 0")] {
            if !(0..data.len()).any(|i| arm[i] && in_complement(i)) {
                return Err(Error::Positivity(format!(
                    "fold {fold} training complement has no samples with {name}"
                )));
            }
        }
    }
    let mu0 = crossfit(&x, &o, &control, &folds, k, spec, exec)?;
    let mu1 = crossfit(&x, &o, &treated, &folds, k, spec, exec)?;
    Ok((mu0, mu1))
}

/// All four nuisances with one shared fold assignment.
pub fn estimate_nuisances(
    data: &[CombinedSample],
    propensity_spec: &RegressorSpec,
    outcome_spec: &RegressorSpec,
    cf: &CrossFit,
    exec: Execution,
) -> Result<NuisanceEstimates> {
    cf.validate()?;
    let p_hat = crossfit_propensity_with(data, propensity_spec, cf.folds, cf.clip, cf.seed, exec)?;
    let (mu0_hat, mu1_hat) = crossfit_conditional_with(data, outcome_spec, cf.folds, cf.seed, exec)?;
    let gamma_hat = if cf.composed_gamma {
        p_hat
            .iter()
            .zip(mu0_hat.iter().zip(&mu1_hat))
            .map(|(p, (m0, m1))| p * m1 + (1.0 - p) * m0)
            .collect()
    } else {
        crossfit_marginal_with(data, outcome_spec, cf.folds, cf.seed, exec)?
    };
    Ok(NuisanceEstimates {
        p_hat,
        gamma_hat,
        mu0_hat,
        mu1_hat,
        folds: folds_for(data, cf.folds, cf.seed)?,
        clip: cf.clip,
        refit_models: None,
    })
}

/// Fit each nuisance once on the full sample.
pub fn refit_nuisance_models(
    data: &[CombinedSample],
    propensity_spec: &RegressorSpec,
    outcome_spec: &RegressorSpec,
    exec: Execution,
) -> Result<NuisanceModels> {
    let x = design(data)?;
    let t: Vec<f64> = data.iter().map(CombinedSample::t).collect();
    let o: Vec<f64> = data.iter().map(|d| d.o).collect();
    let arm = |treated: bool| -> Result<RegressionModel> {
        let idx: Vec<usize> = (0..data.len()).filter(|&i| data[i].treated == treated).collect();
        if idx.is_empty() {
            return Err(Error::Positivity(format!("no samples with t = {}", u8::from(treated))));
        }
        let xs: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| o[i]).collect();
        fit_regressor_with(outcome_spec, &xs, &ys, None, exec)
    };
    Ok(NuisanceModels {
        propensity: fit_regressor_with(propensity_spec, &x, &t, None, exec)?,
        marginal: fit_regressor_with(outcome_spec, &x, &o, None, exec)?,
        mu0: arm(false)?,
        mu1: arm(true)?,
    })
}
