//! Weighted ridge regression, solved in closed form.
//!
//! ```text
//! minimize  sum_i w_i (y_i - b - x_i' beta)^2 + lambda ||beta||^2
//! ```
//!
//! Centering by the weighted means removes the intercept from the penalized
//! system; the normal equations are then solved by Cholesky, falling back to
//! an SVD pseudo-inverse when `lambda = 0` leaves them singular.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct LinearFit {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl LinearFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

pub(crate) fn fit(x: &[Vec<f64>], y: &[f64], w: &[f64], lambda: f64) -> Result<LinearFit> {
    let n = x.len();
    let d = x[0].len();
    let sw: f64 = w.iter().sum();
    let mut x_mean = vec![0.0; d];
    let mut y_mean = 0.0;
    for ((row, yi), wi) in x.iter().zip(y).zip(w) {
        for (m, v) in x_mean.iter_mut().zip(row) {
            *m += wi * v;
        }
        y_mean += wi * yi;
    }
    x_mean.iter_mut().for_each(|m| *m /= sw);
    y_mean /= sw;
    if d == 0 {
        return Ok(LinearFit {
            coef: Vec::new(),
            intercept: y_mean,
        });
    }

    // Rows scaled by sqrt(w) so that A = Z'Z and b = Z'u.
    let z = DMatrix::from_fn(n, d, |i, j| w[i].sqrt() * (x[i][j] - x_mean[j]));
    let u = DVector::from_fn(n, |i, _| w[i].sqrt() * (y[i] - y_mean));
    let mut gram = z.tr_mul(&z);
    for j in 0..d {
        gram[(j, j)] += lambda;
    }
    let rhs = z.tr_mul(&u);

    let beta = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::Degenerate(format!("ridge normal equations: {e}")))?,
    };
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("ridge solution is not finite".into()));
    }
    let coef: Vec<f64> = beta.iter().copied().collect();
    let intercept = y_mean - coef.iter().zip(&x_mean).map(|(c, m)| c * m).sum::<f64>();
    Ok(LinearFit { coef, intercept })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent route: build the full (intercept + features) normal
    /// equations X'WX theta = X'Wy and solve by Gaussian elimination.
    fn normal_equations(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Vec<f64> {
        let p = x[0].len() + 1;
        let mut a = vec![vec![0.0; p + 1]; p];
        for ((row, yi), wi) in x.iter().zip(y).zip(w) {
            let full: Vec<f64> = std::iter::once(1.0).chain(row.iter().copied()).collect();
            for r in 0..p {
                for c in 0..p {
                    a[r][c] += wi * full[r] * full[c];
                }
                a[r][p] += wi * full[r] * yi;
            }
        }
        for col in 0..p {
            let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            for r in 0..p {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=p {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        (0..p).map(|r| a[r][p] / a[r][r]).collect()
    }

    fn fixture(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.37).sin() * 2.0, (t * 0.11).cos() + 0.01 * t, ((i * 7) % 5) as f64]
            })
            .collect();
        let y = x.iter().enumerate().map(|(i, r)| 1.5 - r[0] + 0.3 * r[1] + 0.05 * r[2] + ((i % 4) as f64 - 1.5) * 0.1).collect();
        (x, y)
    }

    #[test]
    fn ols_matches_normal_equations() {
        let (x, y) = fixture(60);
        let w = vec![1.0; 60];
        let fit = fit(&x, &y, &w, 0.0).unwrap();
        let theta = normal_equations(&x, &y, &w);
        assert!((fit.intercept - theta[0]).abs() <= 1e-8);
        for (c, t) in fit.coef.iter().zip(&theta[1..]) {
            assert!((c - t).abs() <= 1e-8);
        }
    }

    #[test]
    fn integer_weights_equal_replication() {
        let (x, y) = fixture(40);
        let w: Vec<f64> = (0..40).map(|i| (i % 4) as f64).collect();
        let weighted = fit(&x, &y, &w, 0.7).unwrap();
        let mut xr = Vec::new();
        let mut yr = Vec::new();
        for i in 0..40 {
            for _ in 0..(i % 4) {
                xr.push(x[i].clone());
                yr.push(y[i]);
            }
        }
        let replicated = fit(&xr, &yr, &vec![1.0; yr.len()], 0.7).unwrap();
        assert!((weighted.intercept - replicated.intercept).abs() <= 1e-8);
        for (a, b) in weighted.coef.iter().zip(&replicated.coef) {
            assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn rank_deficient_ols_still_solves() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 1.0 + i as f64).collect();
        let f = fit(&x, &y, &[1.0; 10], 0.0).unwrap();
        for (row, yi) in x.iter().zip(&y) {
            assert!((f.predict(row) - yi).abs() < 1e-8);
        }
    }
}
