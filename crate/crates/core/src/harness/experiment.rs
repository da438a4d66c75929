//! Monte-Carlo experiment: per round, split (or generate) data, reduce
//! dimension, normalize, fit every router, and sweep it over the test set.

use crate::cate::{fit_learner, CateModel, LearnerKind};
use crate::config::{DataSource, ExperimentConfig};
use crate::data::{self, make_combined_dataset, GsSample, PbSample, Schema, SplitSpec};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::nuisance::{estimate_nuisances, CrossFit};
use crate::regress::{fit_projection, project, Projection, RegressorSpec};
use crate::router::{
    compute_normalization, fit_baseline_router, fit_meta_router_with, BaselineInputs, BaselineMode, Normalization,
    QualityGainModel,
};
use crate::seed::{self, stream};
use crate::synthetic::{generate_arm, generate_joint, SynthConfig};

use super::curve::{default_w_grid, interpolate_te, median, pmur_buckets, random_router_curve, sweep_router, CurvePoint};
use super::output::{AggregateRow, CurveRecord, ExperimentMeta, ResultsTable, RoundFailure, RoundMeta};

/// Router ids in output order.
pub const ROUTER_ORDER: [&str; 6] = ["oracle", "pooled", "gs_only", "meta_r", "meta_dr", "random"];

/// Per-role regressor salts, so roles never share a random stream.
mod role {
    pub const PROPENSITY: u64 = 0;
    pub const OUTCOME: u64 = 1;
    pub const SHIFT: u64 = 2;
    pub const QUALITY: u64 = 3;
}

/// Training and test data for one round, before any transformation.
#[derive(Debug, Clone)]
pub struct RoundData {
    pub test: Vec<GsSample>,
    pub train_gs: Vec<GsSample>,
    pub train_pb: Vec<PbSample>,
    pub pb_gold: Vec<Option<f64>>,
    pub effective_kappa: Option<f64>,
}

/// Output of a completed round.
#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub curves: Vec<CurvePoint>,
    pub meta: RoundMeta,
}

/// Number of PB samples drawn in synthetic mode.
pub fn synthetic_pb_count(cfg: &ExperimentConfig, synth: &SynthConfig) -> usize {
    cfg.split.n_pb_train.unwrap_or_else(|| {
        let n = cfg.split.n_gs_train as f64;
        (n * (1.0 - synth.kappa) / synth.kappa).round() as usize
    })
}

fn synthetic_round(cfg: &ExperimentConfig, synth: &SynthConfig, round_seed: u64, with_test: bool) -> Result<RoundData> {
    let n = cfg.split.n_gs_train;
    let m = synthetic_pb_count(cfg, synth);
    let kappa = n as f64 / (n + m) as f64;
    let gs = generate_arm(&synth.with_seed(seed::derive(round_seed, stream::SYNTH, 0)), true, n, "g")?;
    let pb = if m == 0 {
        Vec::new()
    } else {
        generate_arm(&synth.with_seed(seed::derive(round_seed, stream::SYNTH, 1)), false, m, "p")?
    };
    let test_cfg = SynthConfig {
        kappa,
        seed: seed::derive(round_seed, stream::SYNTH, 2),
        ..synth.clone()
    };
    let test = if with_test {
        generate_joint(&test_cfg, cfg.split.n_test)?
    } else {
        Vec::new()
    };
    let as_gs = |s: &crate::synthetic::SynthSample| GsSample {
        query: s.combined.s.clone(),
        r: s.o1_true,
    };
    Ok(RoundData {
        test: test.iter().map(as_gs).collect(),
        train_gs: gs.iter().map(as_gs).collect(),
        train_pb: pb
            .iter()
            .map(|s| PbSample {
                query: s.combined.s.clone(),
                y: s.o0_true,
            })
            .collect(),
        pb_gold: pb.iter().map(|s| Some(s.o1_true)).collect(),
        effective_kappa: Some(kappa),
    })
}

fn dataset_round(
    cfg: &ExperimentConfig,
    pool: &(Vec<GsSample>, Vec<PbSample>),
    round_seed: u64,
    with_test: bool,
) -> Result<RoundData> {
    let spec = SplitSpec {
        n_test: if with_test { cfg.split.n_test } else { 0 },
        n_gs_train: cfg.split.n_gs_train,
        seed: round_seed,
    };
    let mut split = data::split_dataset(&pool.0, &pool.1, &spec)?;
    if let Some(cap) = cfg.split.n_pb_train {
        split.train_pb.truncate(cap);
        split.pb_gold.truncate(cap);
    }
    Ok(RoundData {
        test: split.test,
        train_gs: split.train_gs,
        train_pb: split.train_pb,
        pb_gold: split.pb_gold,
        effective_kappa: None,
    })
}

fn reproject_gs(p: &Projection, v: &mut [GsSample]) -> Result<()> {
    for g in v {
        g.query.embedding = p.apply(&g.query.embedding)?;
    }
    Ok(())
}

/// PCA (fitted on training queries only) and GS normalization, in place.
/// Returns the projection and normalization applied.
pub fn prepare_round(cfg: &ExperimentConfig, d: &mut RoundData) -> Result<(Option<Projection>, Normalization)> {
    let mut projection = None;
    if let Some(dim) = cfg.pca_dim {
        let train_x: Vec<Vec<f64>> = d
            .train_gs
            .iter()
            .map(|g| g.query.embedding.clone())
            .chain(d.train_pb.iter().map(|p| p.query.embedding.clone()))
            .collect();
        let proj = fit_projection(&train_x, dim)?;
        reproject_gs(&proj, &mut d.test)?;
        reproject_gs(&proj, &mut d.train_gs)?;
        let pb_x: Vec<Vec<f64>> = d.train_pb.iter().map(|p| p.query.embedding.clone()).collect();
        for (p, x) in d.train_pb.iter_mut().zip(project(&proj, &pb_x)?) {
            p.query.embedding = x;
        }
        projection = Some(proj);
    }
    let norm = if d.train_pb.is_empty() {
        Normalization::identity(cfg.normalization)
    } else {
        let r: Vec<f64> = d.train_gs.iter().map(|g| g.r).collect();
        let y: Vec<f64> = d.train_pb.iter().map(|p| p.y).collect();
        Normalization {
            kind: cfg.normalization,
            c: compute_normalization(&r, &y, cfg.normalization)?,
        }
    };
    for g in d.test.iter_mut().chain(d.train_gs.iter_mut()) {
        g.r = norm.apply(g.r);
    }
    for v in d.pb_gold.iter_mut().flatten() {
        *v = norm.apply(*v);
    }
    Ok((projection, norm))
}

/// The quality regressor of a round, reseeded for its role.
pub fn quality_spec(cfg: &ExperimentConfig, round_seed: u64) -> RegressorSpec {
    cfg.regressors.quality.reseeded(seed::derive(round_seed, stream::REGRESSOR, role::QUALITY))
}

/// Fit every router on prepared round data. Routers that cannot be built
/// from the available data are skipped with a note.
pub fn fit_routers(
    cfg: &ExperimentConfig,
    d: &RoundData,
    round_seed: u64,
    exec: Execution,
    notes: &mut Vec<String>,
) -> Result<Vec<QualityGainModel>> {
    let quality = quality_spec(cfg, round_seed);
    let inputs = BaselineInputs {
        train_gs: &d.train_gs,
        train_pb: &d.train_pb,
        pb_gold: Some(&d.pb_gold),
    };
    let mut routers = Vec::new();
    if d.pb_gold.iter().all(Option::is_some) {
        routers.push(fit_baseline_router(inputs, BaselineMode::OracleFullGs, &quality, exec)?);
    } else {
        notes.push("oracle router skipped: some PB training queries lack a GS outcome".into());
    }
    routers.push(fit_baseline_router(inputs, BaselineMode::Pooled, &quality, exec)?);
    routers.push(fit_baseline_router(inputs, BaselineMode::GsOnly, &quality, exec)?);

    if d.train_pb.is_empty() {
        notes.push("meta routers skipped: the PB training set is empty".into());
        return Ok(routers);
    }
    for cate in fit_shift_models(cfg, d, round_seed, exec)? {
        routers.push(fit_meta_router_with(&d.train_gs, &d.train_pb, &cate, &quality, exec)?);
    }
    Ok(routers)
}

/// Cross-fitted nuisances, then one CATE model per configured learner, in
/// `[r, dr]` order.
pub fn fit_shift_models(
    cfg: &ExperimentConfig,
    d: &RoundData,
    round_seed: u64,
    exec: Execution,
) -> Result<Vec<CateModel>> {
    let salted = |spec: &RegressorSpec, role: u64| spec.reseeded(seed::derive(round_seed, stream::REGRESSOR, role));
    let combined = make_combined_dataset(&d.train_gs, &d.train_pb)?;
    let cf = CrossFit {
        folds: cfg.folds,
        clip: cfg.clip,
        seed: seed::derive(round_seed, stream::FOLDS, 0),
        composed_gamma: cfg.composed_gamma,
    };
    let nu = estimate_nuisances(
        &combined,
        &salted(&cfg.regressors.propensity, role::PROPENSITY),
        &salted(&cfg.regressors.outcome, role::OUTCOME),
        &cf,
        exec,
    )?;
    let shift_spec = salted(&cfg.regressors.shift, role::SHIFT);
    [LearnerKind::R, LearnerKind::Dr]
        .into_iter()
        .filter(|k| cfg.learners.contains(k))
        .map(|k| fit_learner(k, &combined, &nu, &shift_spec, cfg.resid_floor, exec))
        .collect()
}

/// Raw data for round `round`: a fresh split of the loaded pool, or fresh
/// synthetic draws. Without `with_test` the test set is left empty and every
/// remaining query goes to training.
pub fn round_data(
    cfg: &ExperimentConfig,
    round: usize,
    pool: Option<&(Vec<GsSample>, Vec<PbSample>)>,
    with_test: bool,
) -> Result<RoundData> {
    let round_seed = seed::derive(cfg.seed, stream::ROUND, round as u64);
    match (cfg.source()?, pool) {
        (DataSource::Synthetic(s), _) => synthetic_round(cfg, s, round_seed, with_test),
        (DataSource::Dataset(_), Some(pool)) => dataset_round(cfg, pool, round_seed, with_test),
        (DataSource::Dataset(p), None) => Err(Error::Empty(format!("dataset `{}` was not loaded", p.display()))),
    }
}

/// Load the dataset pool, if the config names one.
pub fn load_pool(cfg: &ExperimentConfig) -> Result<Option<(Vec<GsSample>, Vec<PbSample>)>> {
    match cfg.source()? {
        DataSource::Dataset(p) => Ok(Some(data::load_dataset(p, Schema::Mixed)?)),
        DataSource::Synthetic(_) => Ok(None),
    }
}

pub fn run_round(
    cfg: &ExperimentConfig,
    round: usize,
    pool: Option<&(Vec<GsSample>, Vec<PbSample>)>,
    exec: Execution,
) -> Result<RoundOutput> {
    let round_seed = seed::derive(cfg.seed, stream::ROUND, round as u64);
    let mut d = round_data(cfg, round, pool, true)?;
    let (_, norm) = prepare_round(cfg, &mut d)?;
    let mut notes = Vec::new();
    let routers = fit_routers(cfg, &d, round_seed, exec, &mut notes)?;

    let mut curves = Vec::new();
    let mut ids = Vec::new();
    let test_x: Vec<Vec<f64>> = d.test.iter().map(|g| g.query.embedding.clone()).collect();
    for model in &routers {
        let grid = default_w_grid(&model.predict(&test_x)?, cfg.grid_size)?;
        curves.extend(sweep_router(model, &d.test, &grid, &cfg.cost)?);
        ids.push(model.provenance.router_id().to_string());
    }
    curves.extend(random_router_curve(
        &d.test,
        &pmur_buckets(),
        cfg.random_reps,
        seed::derive(round_seed, stream::RANDOM_ROUTER, 0),
    )?);
    ids.push("random".into());

    Ok(RoundOutput {
        curves,
        meta: RoundMeta {
            round,
            seed: round_seed,
            normalization_c: norm.c,
            n_test: d.test.len(),
            n_gs_train: d.train_gs.len(),
            n_pb_train: d.train_pb.len(),
            effective_kappa: d.effective_kappa,
            routers: ids,
            notes,
        },
    })
}

/// Median TE and EG per router and PMUR bucket over completed rounds.
pub fn aggregate(rounds: &[RoundOutput], n_test: usize) -> Vec<AggregateRow> {
    let buckets = pmur_buckets();
    let curve_of = |r: &RoundOutput, id: &str| -> Vec<CurvePoint> {
        r.curves.iter().filter(|p| p.router_id == id).cloned().collect()
    };
    let random_te: Vec<Option<f64>> = buckets
        .iter()
        .enumerate()
        .map(|(k, _)| {
            let v: Option<Vec<f64>> = rounds.iter().map(|r| curve_of(r, "random").get(k).map(|p| p.te)).collect();
            v.filter(|v| !v.is_empty()).map(|v| median(&v))
        })
        .collect();
    let mut rows = Vec::new();
    for id in ROUTER_ORDER {
        for (k, &b) in buckets.iter().enumerate() {
            let tes: Option<Vec<f64>> = rounds
                .iter()
                .map(|r| {
                    let c = curve_of(r, id);
                    if id == "random" {
                        c.get(k).map(|p| p.te)
                    } else {
                        interpolate_te(&c, b)
                    }
                })
                .collect();
            let (Some(tes), Some(rand)) = (tes, random_te[k]) else { continue };
            if tes.is_empty() {
                continue;
            }
            let median_te = median(&tes);
            rows.push(AggregateRow {
                router_id: id.to_string(),
                pmur_bucket: b,
                median_te,
                median_eg: super::metrics::efficiency_gain(median_te, rand, n_test),
            });
        }
    }
    rows
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultsTable> {
    run_experiment_with(cfg, Execution::from_flag(cfg.parallel))
}

pub fn run_experiment_with(cfg: &ExperimentConfig, exec: Execution) -> Result<ResultsTable> {
    cfg.validate()?;
    let pool = load_pool(cfg)?;
    let results = exec::map_indexed(exec, cfg.rounds, |r| {
        let out = run_round(cfg, r, pool.as_ref(), exec);
        match &out {
            Ok(_) => log::info!("round {r} done"),
            Err(e) => log::warn!("round {r} failed: {e}"),
        }
        out
    });

    let mut done = Vec::new();
    let mut failures = Vec::new();
    for (round, res) in results.into_iter().enumerate() {
        match res {
            Ok(o) => done.push(o),
            Err(e) => failures.push(RoundFailure {
                round,
                error: e.to_string(),
            }),
        }
    }
    if failures.len() > cfg.failure_budget {
        let first = &failures[0];
        return Err(Error::Aborted(format!(
            "{} of {} rounds failed (budget {}); round {}: {}",
            failures.len(),
            cfg.rounds,
            cfg.failure_budget,
            first.round,
            first.error
        )));
    }
    if done.is_empty() {
        return Err(Error::Aborted("no round completed".into()));
    }

    let n_test = done[0].meta.n_test;
    let aggregate = aggregate(&done, n_test);
    let curves = done
        .iter()
        .flat_map(|r| {
            r.curves.iter().map(move |p| CurveRecord {
                router_id: p.router_id.clone(),
                mc_round: r.meta.round,
                w: p.w,
                pmur: p.pmur,
                te: p.te,
            })
        })
        .collect();
    Ok(ResultsTable {
        curves,
        aggregate,
        meta: ExperimentMeta::new(cfg, done.into_iter().map(|r| r.meta).collect(), failures),
    })
}
