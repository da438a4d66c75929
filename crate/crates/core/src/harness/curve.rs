//! Operating curves: threshold sweeps, the random router, and matching
//! curves on a common PMUR grid.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::GsSample;
use crate::error::{Error, Result};
use crate::router::{decide, Choice, CostModel, QualityGainModel};
use crate::seed;

use super::metrics::{pmur, total_efficiency};

/// One operating point. For the random router `w` holds the assignment
/// probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub router_id: String,
    pub w: f64,
    pub pmur: f64,
    pub te: f64,
}

/// Number of PMUR buckets; bucket `k` is centred at `k / PMUR_BUCKETS`.
pub const PMUR_BUCKETS: usize = 20;

pub fn pmur_buckets() -> Vec<f64> {
    (0..=PMUR_BUCKETS).map(|k| k as f64 / PMUR_BUCKETS as f64).collect()
}

/// Thresholds from the sorted predictions `v`: `v_1 - 1` (everything to the
/// primary model), then `v_(k_j)` with `k_j = round(j n / g)` for
/// `j = 1..=g`, ending at `max v` (nothing to the primary model).
pub fn default_w_grid(m_hat: &[f64], g: usize) -> Result<Vec<f64>> {
    if m_hat.is_empty() {
        return Err(Error::Empty("threshold grid needs predictions".into()));
    }
    if g == 0 {
        return Err(Error::config("grid_size", "must be >= 1"));
    }
    let mut v = m_hat.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut grid = Vec::with_capacity(g + 1);
    grid.push(v[0] - 1.0);
    for j in 1..=g {
        let k = ((j * n) as f64 / g as f64).round() as usize;
        grid.push(if k == 0 { v[0] - 1.0 } else { v[k - 1] });
    }
    Ok(grid)
}

/// Evaluate precomputed predictions `m_hat` (aligned with `test`) at each
/// threshold of an ascending grid.
pub fn sweep_predictions(
    router_id: &str,
    m_hat: &[f64],
    test: &[GsSample],
    w_grid: &[f64],
    cost: &CostModel,
) -> Result<Vec<CurvePoint>> {
    if w_grid.is_empty() {
        return Err(Error::Empty("threshold grid".into()));
    }
    if w_grid.windows(2).any(|w| w[0] > w[1]) || w_grid.iter().any(|w| w.is_nan()) {
        return Err(Error::config("w_grid", "must be sorted ascending"));
    }
    if m_hat.len() != test.len() {
        return Err(Error::LengthMismatch(format!("{} predictions for {} test samples", m_hat.len(), test.len())));
    }
    w_grid
        .iter()
        .map(|&w| {
            let choices: Vec<Choice> = m_hat
                .iter()
                .zip(test)
                .map(|(m, g)| decide(*m, w, cost, &g.query).map(|d| d.choice))
                .collect::<Result<_>>()?;
            Ok(CurvePoint {
                router_id: router_id.to_string(),
                w,
                pmur: pmur(&choices)?,
                te: total_efficiency(&choices, test)?,
            })
        })
        .collect()
}

pub fn sweep_router(
    model: &QualityGainModel,
    test: &[GsSample],
    w_grid: &[f64],
    cost: &CostModel,
) -> Result<Vec<CurvePoint>> {
    let x: Vec<Vec<f64>> = test.iter().map(|g| g.query.embedding.clone()).collect();
    sweep_predictions(model.provenance.router_id(), &model.predict(&x)?, test, w_grid, cost)
}

/// Random assignment with fixed probabilities. Each probability gets `reps`
/// Bernoulli draws per query; TE is `sum r_i * (count_i / reps)`, which is
/// exact at probabilities 0 and 1.
pub fn random_router_curve(test: &[GsSample], probs: &[f64], reps: usize, seed: u64) -> Result<Vec<CurvePoint>> {
    if test.is_empty() {
        return Err(Error::Empty("random router needs a test set".into()));
    }
    if reps == 0 {
        return Err(Error::config("random_reps", "must be >= 1"));
    }
    probs
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config("probs", format!("probability {p} outside [0, 1]")));
            }
            let mut rng = seed::rng(seed::derive(seed, seed::stream::RANDOM_ROUTER, j as u64));
            let mut te = 0.0;
            let mut used = 0usize;
            for g in test {
                let count = (0..reps).filter(|_| rng.random::<f64>() < p).count();
                used += count;
                te += g.r * (count as f64 / reps as f64);
            }
            Ok(CurvePoint {
                router_id: "random".into(),
                w: p,
                pmur: used as f64 / (test.len() * reps) as f64,
                te,
            })
        })
        .collect()
}

/// TE at `target` PMUR by linear interpolation along the curve. Points
/// sharing a PMUR are averaged first. `None` outside the curve's range.
pub fn interpolate_te(points: &[CurvePoint], target: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.pmur, p.te)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    let mut i = 0;
    while i < pts.len() {
        let mut j = i;
        let mut sum = 0.0;
        while j < pts.len() && pts[j].0 == pts[i].0 {
            sum += pts[j].1;
            j += 1;
        }
        merged.push((pts[i].0, sum / (j - i) as f64));
        i = j;
    }
    let pos = merged.partition_point(|(p, _)| *p < target);
    match merged.get(pos) {
        Some(&(p, te)) if p == target => Some(te),
        Some(&(p1, te1)) if pos > 0 => {
            let (p0, te0) = merged[pos - 1];
            Some(te0 + (te1 - te0) * (target - p0) / (p1 - p0))
        }
        _ => None,
    }
}

/// Median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
