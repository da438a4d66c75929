//! End-to-end checks of the estimators and the experiment pipeline against
//! generator ground truth.

use metarouter::cate::{aipw_ate, fit_r_learner, fit_learner, KnownShift, LearnerKind};
use metarouter::config::{ExperimentConfig, RegressorConfig};
use metarouter::data::{self, CombinedSample, DatasetRecord, GsSample, PbSample};
use metarouter::exec::Execution;
use metarouter::harness::{aggregate, run_experiment, run_round, ROUTER_ORDER};
use metarouter::nuisance::{
    crossfit_conditional, crossfit_marginal, crossfit_propensity, estimate_nuisances, CrossFit, NuisanceEstimates,
};
use metarouter::regress::RegressorSpec;
use metarouter::router::{fit_baseline_router, fit_meta_router, BaselineInputs, BaselineMode};
use metarouter::synthetic::{
    generate_arm, generate_causal, generate_joint, FunctionSpec, GaussianSpec, NoiseSpec, SynthConfig, SynthSample,
};

fn combined(s: &[SynthSample]) -> Vec<CombinedSample> {
    s.iter().map(|x| x.combined.clone()).collect()
}

fn embeddings(s: &[SynthSample]) -> Vec<Vec<f64>> {
    s.iter().map(|x| x.combined.s.embedding.clone()).collect()
}

fn as_gs(s: &[SynthSample]) -> Vec<GsSample> {
    s.iter()
        .map(|x| GsSample {
            query: x.combined.s.clone(),
            r: x.o1_true,
        })
        .collect()
}

fn as_pb(s: &[SynthSample]) -> Vec<PbSample> {
    s.iter()
        .map(|x| PbSample {
            query: x.combined.s.clone(),
            y: x.o0_true,
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

fn shifted(kappa: f64, delta: f64) -> SynthConfig {
    SynthConfig {
        kappa,
        dim: 5,
        q: GaussianSpec::isotropic(0.0, 1.0),
        q_prime: GaussianSpec::isotropic(1.0, 1.0),
        m: FunctionSpec::linear(vec![0.4, -0.2], 0.1),
        eta: FunctionSpec::linear(vec![0.4, -0.2], 0.1 - delta),
        ..SynthConfig::default()
    }
}

#[test]
fn aipw_covers_the_true_ate() {
    let cfg = SynthConfig {
        q_prime: GaussianSpec::isotropic(0.5, 1.0),
        m: FunctionSpec::linear(vec![0.3], 0.5),
        eta: FunctionSpec::linear(vec![0.3, -0.5], -0.5),
        seed: 31,
        ..SynthConfig::default()
    };
    let s = generate_causal(&cfg, 10_000).unwrap();
    let data = combined(&s);
    let cf = CrossFit { seed: 3, ..CrossFit::default() };
    let ridge = RegressorSpec::ridge(1.0);
    let nu = estimate_nuisances(&data, &ridge, &ridge, &cf, Execution::default()).unwrap();
    let (ate, se) = aipw_ate(&data, &nu).unwrap();
    let truth = s.iter().map(|x| x.delta_true()).sum::<f64>() / s.len() as f64;
    assert!((ate - truth).abs() <= 3.0 * se, "ate {ate} truth {truth} se {se}");
}

#[test]
fn r_learner_with_true_nuisances_recovers_linear_shift() {
    let cfg = SynthConfig {
        q_prime: GaussianSpec::isotropic(0.5, 1.0),
        m: FunctionSpec::linear(vec![0.3], 0.5),
        eta: FunctionSpec::linear(vec![0.3, -0.5, 0.2], -0.5),
        seed: 17,
        ..SynthConfig::default()
    };
    let s = generate_causal(&cfg, 5000).unwrap();
    let p: Vec<f64> = s.iter().map(|x| x.p_true).collect();
    let gamma: Vec<f64> = s.iter().map(|x| x.p_true * x.m_true + (1.0 - x.p_true) * x.eta_true).collect();
    let nu = NuisanceEstimates::from_parts(p, gamma, vec![0.0; 5000], vec![0.0; 5000], 1e-3).unwrap();
    let model = fit_r_learner(&combined(&s), &nu, &RegressorSpec::ridge(0.0), 1e-6).unwrap();
    let (coef, b) = model.predictor.linear_coefficients().unwrap();
    let truth = [0.0, 0.5, -0.2, 0.0, 0.0];
    assert!((b - 1.0).abs() <= 1e-2, "intercept {b}");
    for (c, t) in coef.iter().zip(truth) {
        assert!((c - t).abs() <= 1e-2, "{coef:?}");
    }
}

#[test]
fn constant_shift_is_recovered() {
    let cfg = SynthConfig {
        m: FunctionSpec::linear(vec![0.2], 1.0),
        eta: FunctionSpec::linear(vec![0.2], -1.0),
        seed: 5,
        ..SynthConfig::default()
    };
    let s = generate_causal(&cfg, 5000).unwrap();
    let data = combined(&s);
    let ridge = RegressorSpec::ridge(1.0);
    let nu = estimate_nuisances(&data, &ridge, &ridge, &CrossFit::default(), Execution::default()).unwrap();
    let model = fit_learner(LearnerKind::R, &data, &nu, &ridge, 1e-6, Execution::default()).unwrap();
    let pred = model.predict(&embeddings(&s)).unwrap();
    let err = pred.iter().map(|d| (d - 2.0).abs()).sum::<f64>() / pred.len() as f64;
    assert!(err <= 0.1, "mean |delta_hat - 2| = {err}");
}

#[test]
fn nuisances_match_known_conditional_means() {
    // Uninformative queries: propensity and marginal mean are both mean(t).
    let cfg = SynthConfig {
        q_prime: GaussianSpec::isotropic(0.0, 1.0),
        seed: 8,
        ..SynthConfig::default()
    };
    let s = generate_causal(&cfg, 2000).unwrap();
    let data: Vec<CombinedSample> = combined(&s)
        .into_iter()
        .map(|mut c| {
            c.o = c.t();
            c
        })
        .collect();
    let ridge = RegressorSpec::ridge(1.0);
    let p = crossfit_propensity(&data, &ridge, 5, 0.01, 1).unwrap();
    let mean_p = p.iter().sum::<f64>() / p.len() as f64;
    assert!((mean_p - 0.5).abs() <= 0.05);
    let mean_t = data.iter().map(|d| d.t()).sum::<f64>() / data.len() as f64;
    let gamma = crossfit_marginal(&data, &ridge, 5, 1).unwrap();
    let spread = gamma.iter().map(|g| (g - mean_t).abs()).sum::<f64>() / gamma.len() as f64;
    assert!(spread <= 0.05, "mean |gamma - mean(t)| = {spread}");

    // Zero noise, m(s) = s_1: the treated-arm regression is exact.
    let cfg = SynthConfig {
        m: FunctionSpec::linear(vec![1.0], 0.0),
        eta: FunctionSpec::Constant { value: 0.0 },
        noise_gs: NoiseSpec::Gaussian { sigma: 0.0 },
        noise_pb: NoiseSpec::Gaussian { sigma: 0.0 },
        seed: 9,
        ..SynthConfig::default()
    };
    let s = generate_causal(&cfg, 1000).unwrap();
    let (_, mu1) = crossfit_conditional(&combined(&s), &RegressorSpec::ridge(1e-6), 5, 2).unwrap();
    for (m, x) in mu1.iter().zip(&s) {
        assert!((m - x.combined.s.embedding[0]).abs() <= 1e-3);
    }
}

#[test]
fn meta_router_removes_pb_bias() {
    let cfg = shifted(0.5, 1.0);
    let ridge = RegressorSpec::ridge(1.0);
    let (mut meta, mut pooled) = (Vec::new(), Vec::new());
    for seed in 0..10 {
        let g = generate_arm(&cfg.with_seed(seed), true, 200, "g").unwrap();
        let p = generate_arm(&cfg.with_seed(seed + 100), false, 2000, "p").unwrap();
        let (gs, pb) = (as_gs(&g), as_pb(&p));
        let data = data::make_combined_dataset(&gs, &pb).unwrap();
        let nu = estimate_nuisances(&data, &ridge, &ridge, &CrossFit { seed, ..CrossFit::default() }, Execution::default())
            .unwrap();
        let delta = fit_learner(LearnerKind::R, &data, &nu, &ridge, 1e-6, Execution::default()).unwrap();
        let m_hat = fit_meta_router(&gs, &pb, &delta, &ridge).unwrap();
        let inputs = BaselineInputs { train_gs: &gs, train_pb: &pb, pb_gold: None };
        let pooled_hat = fit_baseline_router(inputs, BaselineMode::Pooled, &ridge, Execution::default()).unwrap();

        let test = generate_joint(&cfg.with_seed(seed + 1000), 1000).unwrap();
        let x = embeddings(&test);
        let m: Vec<f64> = test.iter().map(|t| t.m_true).collect();
        meta.push(rmse(&m_hat.predict(&x).unwrap(), &m));
        pooled.push(rmse(&pooled_hat.predict(&x).unwrap(), &m));
    }
    let (meta, pooled) = (median(meta), median(pooled));
    assert!(meta <= 0.15 && pooled >= 0.5, "meta {meta} pooled {pooled}");
}

#[test]
fn pooled_matches_oracle_without_bias() {
    let cfg = shifted(0.5, 0.0);
    let g = generate_arm(&cfg.with_seed(1), true, 2500, "g").unwrap();
    let p = generate_arm(&cfg.with_seed(2), false, 2500, "p").unwrap();
    let (gs, pb) = (as_gs(&g), as_pb(&p));
    let gold: Vec<Option<f64>> = p.iter().map(|x| Some(x.o1_true)).collect();
    let inputs = BaselineInputs { train_gs: &gs, train_pb: &pb, pb_gold: Some(&gold) };
    let ridge = RegressorSpec::ridge(1.0);
    let pooled = fit_baseline_router(inputs, BaselineMode::Pooled, &ridge, Execution::default()).unwrap();
    let oracle = fit_baseline_router(inputs, BaselineMode::OracleFullGs, &ridge, Execution::default()).unwrap();
    let x = embeddings(&generate_joint(&cfg.with_seed(3), 1000).unwrap());
    let gap = pooled
        .predict(&x)
        .unwrap()
        .iter()
        .zip(oracle.predict(&x).unwrap())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(gap <= 0.05, "max gap {gap}");
}

#[test]
fn pooled_constant_shows_mixture_bias() {
    let cfg = SynthConfig {
        q_prime: GaussianSpec::isotropic(0.0, 1.0),
        m: FunctionSpec::linear(vec![0.1], 0.3),
        eta: FunctionSpec::linear(vec![0.1], -0.7),
        ..SynthConfig::default()
    };
    let g = generate_arm(&cfg.with_seed(1), true, 500, "g").unwrap();
    let p = generate_arm(&cfg.with_seed(2), false, 4500, "p").unwrap();
    let inputs = BaselineInputs { train_gs: &as_gs(&g), train_pb: &as_pb(&p), pb_gold: None };
    let fit = fit_baseline_router(inputs, BaselineMode::Pooled, &RegressorSpec::Constant, Execution::default()).unwrap();
    let c = fit.predictor.linear_coefficients().unwrap().1;
    // kappa = 0.1 and m-bar = 0.3: 0.1 * 0.3 + 0.9 * (0.3 - 1) = 0.3 - 0.9.
    assert!((c - (0.3 - 0.9)).abs() <= 0.02, "{c}");
}

#[test]
fn true_shift_meta_router_is_the_oracle() {
    let cfg = SynthConfig {
        noise_gs: NoiseSpec::Gaussian { sigma: 0.0 },
        noise_pb: NoiseSpec::Gaussian { sigma: 0.0 },
        ..shifted(0.5, 1.0)
    };
    let g = generate_arm(&cfg.with_seed(1), true, 100, "g").unwrap();
    let p = generate_arm(&cfg.with_seed(2), false, 300, "p").unwrap();
    let (gs, pb) = (as_gs(&g), as_pb(&p));
    let gold: Vec<Option<f64>> = p.iter().map(|x| Some(x.m_true)).collect();
    let ridge = RegressorSpec::ridge(0.5);
    let meta = fit_meta_router(&gs, &pb, &KnownShift(|_: &[f64]| 1.0), &ridge).unwrap();
    let inputs = BaselineInputs { train_gs: &gs, train_pb: &pb, pb_gold: Some(&gold) };
    let oracle = fit_baseline_router(inputs, BaselineMode::OracleFullGs, &ridge, Execution::default()).unwrap();
    let x = embeddings(&p);
    for (a, b) in meta.predict(&x).unwrap().iter().zip(oracle.predict(&x).unwrap()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

fn small_experiment() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::synthetic(SynthConfig::default());
    cfg.seed = 21;
    cfg.rounds = 4;
    cfg.random_reps = 20;
    cfg.split.n_test = 100;
    cfg.split.n_gs_train = 60;
    cfg.regressors = RegressorConfig::uniform(RegressorSpec::ridge(1.0));
    cfg
}

#[test]
fn aggregation_ignores_round_order() {
    let cfg = small_experiment();
    let rounds: Vec<_> = (0..cfg.rounds)
        .map(|r| run_round(&cfg, r, None, Execution::Sequential).unwrap())
        .collect();
    let mut shuffled = rounds.clone();
    shuffled.rotate_left(1);
    shuffled.swap(0, 2);
    assert_eq!(aggregate(&rounds, 100), aggregate(&shuffled, 100));
}

#[test]
fn dataset_experiment_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pool.jsonl");
    let synth = SynthConfig { dim: 8, seed: 4, ..SynthConfig::default() };
    let records: Vec<DatasetRecord> =
        generate_joint(&synth, 400).unwrap().iter().map(|s| s.to_record(false)).collect();
    data::write_records(&path, &records).unwrap();

    let mut cfg = small_experiment();
    cfg.synthetic = None;
    cfg.dataset = Some(path);
    cfg.pca_dim = Some(3);
    cfg.split.n_pb_train = Some(150);
    let t = run_experiment(&cfg).unwrap();
    assert_eq!(t.meta.rounds_completed, 4);
    for m in &t.meta.rounds {
        assert_eq!((m.n_test, m.n_gs_train, m.n_pb_train), (100, 60, 150));
        assert_eq!(m.routers, ROUTER_ORDER);
        assert!(m.effective_kappa.is_none());
    }
    assert_eq!(t, run_experiment(&cfg).unwrap());
}
