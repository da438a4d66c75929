//! Putting GS outcomes on the PB scale: `r -> c * r`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationKind {
    /// `c = max|y| / max|r|`
    Magnitude,
    /// `c = sd(y) / sd(r)`, population standard deviations.
    #[default]
    Variance,
    /// `c` minimizing the 2-Wasserstein distance between `{c r}` and `{y}`.
    Wasserstein,
}

/// A resolved normalization constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub kind: NormalizationKind,
    pub c: f64,
}

impl Normalization {
    pub fn identity(kind: NormalizationKind) -> Self {
        Normalization { kind, c: 1.0 }
    }

    pub fn apply(&self, r: f64) -> f64 {
        self.c * r
    }
}

const GOLDEN_TOL: f64 = 1e-6;

pub fn compute_normalization(r: &[f64], y: &[f64], kind: NormalizationKind) -> Result<f64> {
    if r.is_empty() || y.is_empty() {
        return Err(Error::Empty("normalization needs GS and PB outcomes".into()));
    }
    if r.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("normalization input".into()));
    }
    let c = match kind {
        NormalizationKind::Magnitude => {
            let max_r = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if max_r == 0.0 {
                return Err(Error::Degenerate("all GS outcomes are zero".into()));
            }
            y.iter().fold(0.0f64, |m, v| m.max(v.abs())) / max_r
        }
        NormalizationKind::Variance => variance_ratio(r, y)?,
        NormalizationKind::Wasserstein => {
            let hi = 10.0 * variance_ratio(r, y)?;
            let (a, b, _) = quantile_moments(r, y);
            golden_section(|c| c * c * a - 2.0 * c * b, 0.0, hi)
        }
    };
    if c > 0.0 && c.is_finite() {
        Ok(c)
    } else {
        Err(Error::Degenerate(format!("{kind:?} normalization constant is {c}, not positive")))
    }
}

fn sd_pop(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

fn variance_ratio(r: &[f64], y: &[f64]) -> Result<f64> {
    let sr = sd_pop(r);
    if sr == 0.0 {
        return Err(Error::Degenerate("GS outcomes have zero variance".into()));
    }
    Ok(sd_pop(y) / sr)
}

/// `(A, B, C)` with `W2^2(c) = c^2 A - 2 c B + C`, integrating products of
/// the two empirical quantile functions over their merged breakpoints.
pub(crate) fn quantile_moments(r: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mut a_sorted = r.to_vec();
    let mut b_sorted = y.to_vec();
    a_sorted.sort_by(f64::total_cmp);
    b_sorted.sort_by(f64::total_cmp);
    let (n, m) = (a_sorted.len() as u128, b_sorted.len() as u128);
    let total = (n * m) as f64;
    // Positions are in units of 1 / (n m): r steps every m, y steps every n.
    let (mut i, mut j, mut pos) = (0usize, 0usize, 0u128);
    let (mut sa, mut sb, mut sc) = (0.0, 0.0, 0.0);
    while pos < n * m {
        let next = ((i as u128 + 1) * m).min((j as u128 + 1) * n);
        let len = (next - pos) as f64 / total;
        let (qa, qb) = (a_sorted[i], b_sorted[j]);
        sa += len * qa * qa;
        sb += len * qa * qb;
        sc += len * qb * qb;
        pos = next;
        if pos == (i as u128 + 1) * m {
            i += 1;
        }
        if pos == (j as u128 + 1) * n {
            j += 1;
        }
    }
    (sa, sb, sc)
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > GOLDEN_TOL * 0.5 * (lo.abs() + hi.abs()) && hi - lo > f64::MIN_POSITIVE {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}
