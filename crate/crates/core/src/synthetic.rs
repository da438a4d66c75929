//! Synthetic GS/PB data with known ground truth.
//!
//! Two generators are provided:
//!
//! * joint: `t ~ Bernoulli(kappa)`, then `s ~ Q` if `t = 1` else `s ~ Q'`;
//! * causal: `s ~ kappa Q + (1 - kappa) Q'`, then `t ~ Bernoulli(p(s))`
//!   with `p(s) = kappa f_Q(s) / (kappa f_Q(s) + (1 - kappa) f_Q'(s))`.
//!
//! Both draw the two potential outcomes `o1 = m(s) + eps`, `o0 = eta(s) + eps'`
//! independently and report `o = t o1 + (1 - t) o0`. The two processes have
//! the same law; [`equivalence_diagnostics`] checks that empirically.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{CombinedSample, DatasetRecord, Origin, Query, Source, SourceTag};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

/// A scalar broadcast to every coordinate, or an explicit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Broadcast {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Broadcast {
    fn resolve(&self, dim: usize, key: &str) -> Result<Vec<f64>> {
        let v = match self {
            Broadcast::Scalar(x) => vec![*x; dim],
            Broadcast::Vector(v) if v.len() == dim => v.clone(),
            Broadcast::Vector(v) => {
                return Err(Error::config(key, format!("expected {dim} entries, got {}", v.len())));
            }
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::config(key, "entries must be finite"));
        }
        Ok(v)
    }
}

/// Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    #[serde(default = "zero")]
    pub mean: Broadcast,
    #[serde(default = "one")]
    pub var: Broadcast,
}

fn zero() -> Broadcast {
    Broadcast::Scalar(0.0)
}

fn one() -> Broadcast {
    Broadcast::Scalar(1.0)
}

impl GaussianSpec {
    pub fn isotropic(mean: f64, var: f64) -> Self {
        GaussianSpec {
            mean: Broadcast::Scalar(mean),
            var: Broadcast::Scalar(var),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Constant {
        value: f64,
    },
    /// `intercept + coefs . s`; missing trailing coefficients are zero.
    Linear {
        coefs: Vec<f64>,
        #[serde(default)]
        intercept: f64,
    },
    /// `amplitude * exp(-|s - center|^2 / (2 scale^2))`.
    Radial {
        center: Broadcast,
        scale: f64,
        amplitude: f64,
    },
}

impl FunctionSpec {
    pub fn linear(coefs: Vec<f64>, intercept: f64) -> Self {
        FunctionSpec::Linear { coefs, intercept }
    }

    /// `(sup |f|)` if the function is bounded.
    fn bound(&self) -> Option<f64> {
        match self {
            FunctionSpec::Constant { value } => Some(value.abs()),
            FunctionSpec::Radial { amplitude, .. } => Some(amplitude.abs()),
            FunctionSpec::Linear { coefs, intercept } => coefs.iter().all(|c| *c == 0.0).then_some(intercept.abs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Function {
    Constant(f64),
    Linear(Vec<f64>, f64),
    Radial(Vec<f64>, f64, f64),
}

impl Function {
    fn new(spec: &FunctionSpec, dim: usize, key: &str) -> Result<Self> {
        Ok(match spec {
            FunctionSpec::Constant { value } => Function::Constant(*value),
            FunctionSpec::Linear { coefs, intercept } => {
                if coefs.len() > dim {
                    return Err(Error::config(
                        format!("{key}.coefs"),
                        format!("has {} entries for dimension {dim}", coefs.len()),
                    ));
                }
                let mut c = coefs.clone();
                c.resize(dim, 0.0);
                Function::Linear(c, *intercept)
            }
            FunctionSpec::Radial { center, scale, amplitude } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::config(format!("{key}.scale"), "must be finite and > 0"));
                }
                Function::Radial(center.resolve(dim, &format!("{key}.center"))?, *scale, *amplitude)
            }
        })
    }

    fn eval(&self, s: &[f64]) -> f64 {
        match self {
            Function::Constant(v) => *v,
            Function::Linear(c, b) => b + c.iter().zip(s).map(|(ci, si)| ci * si).sum::<f64>(),
            Function::Radial(center, scale, amp) => {
                let d2: f64 = center.iter().zip(s).map(|(c, x)| (x - c) * (x - c)).sum();
                amp * (-d2 / (2.0 * scale * scale)).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    Gaussian { sigma: f64 },
    /// Outcomes in `{-1, 0, 1}` with conditional mean equal to the arm's
    /// mean function.
    DiscretePb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_q")]
    pub q: GaussianSpec,
    #[serde(default = "default_q_prime")]
    pub q_prime: GaussianSpec,
    #[serde(default = "default_m")]
    pub m: FunctionSpec,
    #[serde(default = "default_eta")]
    pub eta: FunctionSpec,
    #[serde(default = "default_noise")]
    pub noise_gs: NoiseSpec,
    #[serde(default = "default_noise")]
    pub noise_pb: NoiseSpec,
    /// Generator seed. Set programmatically; configs take seeds from the
    /// master seed instead.
    #[serde(skip)]
    pub seed: u64,
}

fn default_kappa() -> f64 {
    0.5
}
fn default_dim() -> usize {
    5
}
fn default_q() -> GaussianSpec {
    GaussianSpec::isotropic(0.0, 1.0)
}
fn default_q_prime() -> GaussianSpec {
    GaussianSpec::isotropic(1.0, 1.0)
}
fn default_m() -> FunctionSpec {
    FunctionSpec::linear(vec![0.1], 0.0)
}
fn default_eta() -> FunctionSpec {
    FunctionSpec::linear(vec![0.1], -1.0)
}
fn default_noise() -> NoiseSpec {
    NoiseSpec::Gaussian { sigma: 0.1 }
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            kappa: default_kappa(),
            dim: default_dim(),
            q: default_q(),
            q_prime: default_q_prime(),
            m: default_m(),
            eta: default_eta(),
            noise_gs: default_noise(),
            noise_pb: default_noise(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Check ranges; `key` prefixes error paths (e.g. `synthetic`).
    pub fn validate(&self, key: &str) -> Result<()> {
        Generator::new(self, key).map(|_| ())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SynthConfig { seed, ..self.clone() }
    }
}

/// One generated unit with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSample {
    pub combined: CombinedSample,
    pub o1_true: f64,
    pub o0_true: f64,
    pub m_true: f64,
    pub eta_true: f64,
    pub p_true: f64,
}

impl SynthSample {
    pub fn delta_true(&self) -> f64 {
        self.m_true - self.eta_true
    }

    /// Dataset record with ground truth under `truth`. With `observed_only`
    /// the record carries just the evaluated arm (`gs` or `pb`); otherwise
    /// it is a `both` record with the GS draw as `outcome` and the PB draw
    /// as `pb_outcome`.
    pub fn to_record(&self, observed_only: bool) -> DatasetRecord {
        let mut rec = DatasetRecord::from_query(&self.combined.s);
        if observed_only {
            rec.source = Some(if self.combined.treated { SourceTag::Gs } else { SourceTag::Pb });
            rec.outcome = Some(self.combined.o);
        } else {
            rec.source = Some(SourceTag::Both);
            rec.outcome = Some(self.o1_true);
            rec.pb_outcome = Some(self.o0_true);
        }
        rec.truth = Some(serde_json::json!({
            "t": u8::from(self.combined.treated),
            "m": self.m_true,
            "eta": self.eta_true,
            "delta": self.delta_true(),
            "p": self.p_true,
            "o1": self.o1_true,
            "o0": self.o0_true,
        }));
        rec
    }
}

struct Gaussian {
    mean: Vec<f64>,
    sd: Vec<f64>,
    log_norm: f64,
    var: Vec<f64>,
}

impl Gaussian {
    fn new(spec: &GaussianSpec, dim: usize, key: &str) -> Result<Self> {
        let mean = spec.mean.resolve(dim, &format!("{key}.mean"))?;
        let var = spec.var.resolve(dim, &format!("{key}.var"))?;
        if var.iter().any(|v| *v <= 0.0) {
            return Err(Error::config(format!("{key}.var"), "variances must be > 0"));
        }
        let log_norm = -0.5 * var.iter().map(|v| (2.0 * std::f64::consts::PI * v).ln()).sum::<f64>();
        Ok(Gaussian {
            sd: var.iter().map(|v| v.sqrt()).collect(),
            mean,
            log_norm,
            var,
        })
    }

    fn log_density(&self, s: &[f64]) -> f64 {
        self.log_norm
            - 0.5
                * s.iter()
                    .zip(&self.mean)
                    .zip(&self.var)
                    .map(|((x, m), v)| (x - m) * (x - m) / v)
                    .sum::<f64>()
    }

    fn draw(&self, rng: &mut Rng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.sd)
            .map(|(m, sd)| {
                let z: f64 = StandardNormal.sample(rng);
                m + sd * z
            })
            .collect()
    }
}

struct Generator {
    kappa: f64,
    q: Gaussian,
    q_prime: Gaussian,
    m: Function,
    eta: Function,
    noise_gs: NoiseSpec,
    noise_pb: NoiseSpec,
}

/// log of the smallest positive normal f64; densities below it underflow.
const LOG_UNDERFLOW: f64 = -708.0;

impl Generator {
    fn new(cfg: &SynthConfig, key: &str) -> Result<Self> {
        if !(0.0..=1.0).contains(&cfg.kappa) {
            return Err(Error::config(format!("{key}.kappa"), format!("must lie in [0, 1], got {}", cfg.kappa)));
        }
        if cfg.dim == 0 {
            return Err(Error::config(format!("{key}.dim"), "must be >= 1"));
        }
        for (name, noise, f) in [("noise_gs", cfg.noise_gs, &cfg.m), ("noise_pb", cfg.noise_pb, &cfg.eta)] {
            match noise {
                NoiseSpec::Gaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                    return Err(Error::config(format!("{key}.{name}.sigma"), "must be finite and >= 0"));
                }
                NoiseSpec::DiscretePb if !f.bound().is_some_and(|b| b < 1.0) => {
                    return Err(Error::config(
                        format!("{key}.{name}"),
                        "discrete_pb needs a constant or radial mean function with values in (-1, 1)",
                    ));
                }
                _ => {}
            }
        }
        Ok(Generator {
            kappa: cfg.kappa,
            q: Gaussian::new(&cfg.q, cfg.dim, &format!("{key}.q"))?,
            q_prime: Gaussian::new(&cfg.q_prime, cfg.dim, &format!("{key}.q_prime"))?,
            m: Function::new(&cfg.m, cfg.dim, &format!("{key}.m"))?,
            eta: Function::new(&cfg.eta, cfg.dim, &format!("{key}.eta"))?,
            noise_gs: cfg.noise_gs,
            noise_pb: cfg.noise_pb,
        })
    }

    fn propensity(&self, s: &[f64]) -> Result<f64> {
        if self.kappa == 0.0 || self.kappa == 1.0 {
            return Ok(self.kappa);
        }
        let (lq, lqp) = (self.q.log_density(s), self.q_prime.log_density(s));
        if lq < LOG_UNDERFLOW && lqp < LOG_UNDERFLOW {
            return Err(Error::Positivity("both query densities vanish at this point".into()));
        }
        Ok(mix_prob(self.kappa, lq, lqp))
    }

    fn outcome(noise: NoiseSpec, mean: f64, rng: &mut Rng) -> f64 {
        match noise {
            NoiseSpec::Gaussian { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sigma * z
            }
            NoiseSpec::DiscretePb => {
                // Tie mass shrinks near |mean| = 1 so all three masses stay
                // nonnegative; the mean is exact either way.
                let z = (1.0 - mean.abs()).min(0.2);
                let plus = (1.0 + mean) / 2.0 - z / 2.0;
                let minus = (1.0 - mean) / 2.0 - z / 2.0;
                let u: f64 = rng.random();
                if u < plus {
                    1.0
                } else if u < plus + minus {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn sample(&self, s: Vec<f64>, treated: bool, id: String, origin: Origin, rng: &mut Rng) -> Result<SynthSample> {
        let m_true = self.m.eval(&s);
        let eta_true = self.eta.eval(&s);
        let o1_true = Self::outcome(self.noise_gs, m_true, rng);
        let o0_true = Self::outcome(self.noise_pb, eta_true, rng);
        let p_true = self.propensity(&s)?;
        Ok(SynthSample {
            combined: CombinedSample {
                s: Query::new(id, s),
                treated,
                o: if treated { o1_true } else { o0_true },
                origin,
            },
            o1_true,
            o0_true,
            m_true,
            eta_true,
            p_true,
        })
    }
}

/// `kappa f / (kappa f + (1 - kappa) g)` from log densities.
fn mix_prob(kappa: f64, log_f: f64, log_g: f64) -> f64 {
    let a = kappa.ln() + log_f;
    let b = (1.0 - kappa).ln() + log_g;
    1.0 / (1.0 + (b - a).exp())
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::config("n", "sample count must be >= 1"))
    } else {
        Ok(())
    }
}

struct Counter {
    gs: usize,
    pb: usize,
}

impl Counter {
    fn next(&mut self, treated: bool) -> Origin {
        let slot = if treated { &mut self.gs } else { &mut self.pb };
        let index = *slot;
        *slot += 1;
        Origin {
            source: if treated { Source::Gs } else { Source::Pb },
            index,
        }
    }
}

pub fn generate_joint(cfg: &SynthConfig, n: usize) -> Result<Vec<SynthSample>> {
    check_n(n)?;
    let g = Generator::new(cfg, "synthetic")?;
    let mut rng = seed::rng(seed::derive(cfg.seed, seed::stream::SYNTH, 0));
    let mut counter = Counter { gs: 0, pb: 0 };
    (0..n)
        .map(|i| {
            let treated = rng.random::<f64>() < g.kappa;
            let s = if treated { g.q.draw(&mut rng) } else { g.q_prime.draw(&mut rng) };
            g.sample(s, treated, format!("j{i}"), counter.next(treated), &mut rng)
        })
        .collect()
}

pub fn generate_causal(cfg: &SynthConfig, n: usize) -> Result<Vec<SynthSample>> {
    check_n(n)?;
    let g = Generator::new(cfg, "synthetic")?;
    let mut rng = seed::rng(seed::derive(cfg.seed, seed::stream::SYNTH, 1));
    let mut counter = Counter { gs: 0, pb: 0 };
    (0..n)
        .map(|i| {
            let from_q = rng.random::<f64>() < g.kappa;
            let s = if from_q { g.q.draw(&mut rng) } else { g.q_prime.draw(&mut rng) };
            let p = g.propensity(&s)?;
            let treated = rng.random::<f64>() < p;
            g.sample(s, treated, format!("c{i}"), counter.next(treated), &mut rng)
        })
        .collect()
}

/// Exactly `n` samples of one arm: `s ~ Q` with `t = 1`, or `s ~ Q'` with
/// `t = 0`. Ids are `{prefix}{i}`.
pub fn generate_arm(cfg: &SynthConfig, treated: bool, n: usize, prefix: &str) -> Result<Vec<SynthSample>> {
    let g = Generator::new(cfg, "synthetic")?;
    let tag = if treated { 2 } else { 3 };
    let mut rng = seed::rng(seed::derive(cfg.seed, seed::stream::SYNTH, tag));
    let mut counter = Counter { gs: 0, pb: 0 };
    (0..n)
        .map(|i| {
            let s = if treated { g.q.draw(&mut rng) } else { g.q_prime.draw(&mut rng) };
            g.sample(s, treated, format!("{prefix}{i}"), counter.next(treated), &mut rng)
        })
        .collect()
}

pub fn true_propensity(s: &[f64], cfg: &SynthConfig) -> Result<f64> {
    let g = Generator::new(cfg, "synthetic")?;
    if s.len() != cfg.dim {
        return Err(Error::dim(cfg.dim, s.len()));
    }
    g.propensity(s)
}

/// `(m(s), eta(s))` for the configured mean functions.
pub fn true_means(s: &[f64], cfg: &SynthConfig) -> Result<(f64, f64)> {
    let g = Generator::new(cfg, "synthetic")?;
    if s.len() != cfg.dim {
        return Err(Error::dim(cfg.dim, s.len()));
    }
    Ok((g.m.eval(s), g.eta.eval(s)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceThresholds {
    pub mean_t_gap: f64,
    pub bin_truth_gap: f64,
    pub ks: f64,
    /// Bins smaller than this are excluded from the propensity check.
    pub min_bin_count: usize,
}

impl Default for EquivalenceThresholds {
    fn default() -> Self {
        EquivalenceThresholds {
            mean_t_gap: 0.012,
            bin_truth_gap: 0.05,
            ks: 0.02,
            min_bin_count: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub lo: f64,
    pub hi: f64,
    pub n1: usize,
    pub n2: usize,
    pub mean_t1: f64,
    pub mean_t2: f64,
    pub mean_p1: f64,
    pub mean_p2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub n1: usize,
    pub n2: usize,
    pub mean_t1: f64,
    pub mean_t2: f64,
    pub mean_t_gap: f64,
    pub z_stat: f64,
    pub bins: Vec<BinRow>,
    /// Largest `|E^[t | bin] - mean p_true(bin)|` over both datasets and
    /// all bins with enough samples.
    pub bin_truth_gap: f64,
    /// Largest `|E^[t | bin]_1 - E^[t | bin]_2|` over bins; informational.
    pub bin_cross_gap: f64,
    pub ks_treated: f64,
    pub ks_control: f64,
    pub thresholds: EquivalenceThresholds,
    pub pass_mean_t: bool,
    pub pass_bins: bool,
    pub pass_ks: bool,
    pub pass: bool,
}

const MIN_DIAG_SAMPLES: usize = 1000;

/// Projection of `s` onto the unit diagonal `1 / sqrt(D)`.
fn diagonal(s: &[f64]) -> f64 {
    s.iter().sum::<f64>() / (s.len() as f64).sqrt()
}

fn mean(v: impl Iterator<Item = f64>) -> (f64, usize) {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (if n == 0 { 0.0 } else { s / n as f64 }, n)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.len() == b.len() { 0.0 } else { 1.0 };
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Draw `n` samples from each generator under seeds derived from `master`
/// and compare them.
pub fn check_equivalence(cfg: &SynthConfig, n: usize, n_bins: usize, master: u64) -> Result<EquivalenceReport> {
    let joint = generate_joint(&cfg.with_seed(seed::derive(master, seed::stream::DIAG_JOINT, 0)), n)?;
    let causal = generate_causal(&cfg.with_seed(seed::derive(master, seed::stream::DIAG_CAUSAL, 0)), n)?;
    equivalence_diagnostics(&joint, &causal, n_bins)
}

pub fn equivalence_diagnostics(d1: &[SynthSample], d2: &[SynthSample], n_bins: usize) -> Result<EquivalenceReport> {
    equivalence_diagnostics_with(d1, d2, n_bins, EquivalenceThresholds::default())
}

pub fn equivalence_diagnostics_with(
    d1: &[SynthSample],
    d2: &[SynthSample],
    n_bins: usize,
    th: EquivalenceThresholds,
) -> Result<EquivalenceReport> {
    for d in [d1, d2] {
        if d.len() < MIN_DIAG_SAMPLES {
            return Err(Error::InsufficientSamples {
                needed: MIN_DIAG_SAMPLES,
                available: d.len(),
            });
        }
    }
    if n_bins == 0 {
        return Err(Error::config("bins", "must be >= 1"));
    }
    let t = |d: &SynthSample| d.combined.t();
    let (mean_t1, n1) = mean(d1.iter().map(t));
    let (mean_t2, n2) = mean(d2.iter().map(t));
    let gap = (mean_t1 - mean_t2).abs();
    let pooled = (mean_t1 * n1 as f64 + mean_t2 * n2 as f64) / (n1 + n2) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    let z_stat = if gap == 0.0 {
        0.0
    } else if se > 0.0 {
        (mean_t1 - mean_t2) / se
    } else {
        f64::INFINITY
    };

    let proj1: Vec<f64> = d1.iter().map(|d| diagonal(&d.combined.s.embedding)).collect();
    let proj2: Vec<f64> = d2.iter().map(|d| diagonal(&d.combined.s.embedding)).collect();
    let mut all: Vec<f64> = proj1.iter().chain(&proj2).copied().collect();
    all.sort_by(f64::total_cmp);
    let inner: Vec<f64> = (1..n_bins).map(|k| all[k * all.len() / n_bins]).collect();
    let bin_of = |v: f64| inner.partition_point(|e| *e <= v);
    let stats = |d: &[SynthSample], proj: &[f64], b: usize| {
        let members = || d.iter().zip(proj).filter(move |(_, p)| bin_of(**p) == b).map(|(s, _)| s);
        let (mt, n) = mean(members().map(t));
        let (mp, _) = mean(members().map(|s| s.p_true));
        (mt, mp, n)
    };
    let mut bins = Vec::with_capacity(n_bins);
    let (mut truth_gap, mut cross_gap) = (0.0f64, 0.0f64);
    for b in 0..n_bins {
        let (mt1, mp1, c1) = stats(d1, &proj1, b);
        let (mt2, mp2, c2) = stats(d2, &proj2, b);
        if c1 >= th.min_bin_count {
            truth_gap = truth_gap.max((mt1 - mp1).abs());
        }
        if c2 >= th.min_bin_count {
            truth_gap = truth_gap.max((mt2 - mp2).abs());
        }
        if c1 > 0 && c2 > 0 {
            cross_gap = cross_gap.max((mt1 - mt2).abs());
        }
        bins.push(BinRow {
            lo: if b == 0 { all[0] } else { inner[b - 1] },
            hi: if b + 1 == n_bins { all[all.len() - 1] } else { inner[b] },
            n1: c1,
            n2: c2,
            mean_t1: mt1,
            mean_t2: mt2,
            mean_p1: mp1,
            mean_p2: mp2,
        });
    }

    let arm = |d: &[SynthSample], proj: &[f64], treated: bool| -> Vec<f64> {
        d.iter().zip(proj).filter(|(s, _)| s.combined.treated == treated).map(|(_, p)| *p).collect()
    };
    let ks_treated = ks_statistic(&arm(d1, &proj1, true), &arm(d2, &proj2, true));
    let ks_control = ks_statistic(&arm(d1, &proj1, false), &arm(d2, &proj2, false));

    let pass_mean_t = gap <= th.mean_t_gap;
    let pass_bins = truth_gap <= th.bin_truth_gap;
    let pass_ks = ks_treated <= th.ks && ks_control <= th.ks;
    Ok(EquivalenceReport {
        n1,
        n2,
        mean_t1,
        mean_t2,
        mean_t_gap: gap,
        z_stat,
        bins,
        bin_truth_gap: truth_gap,
        bin_cross_gap: cross_gap,
        ks_treated,
        ks_control,
        thresholds: th,
        pass_mean_t,
        pass_bins,
        pass_ks,
        pass: pass_mean_t && pass_bins && pass_ks,
    })
}
