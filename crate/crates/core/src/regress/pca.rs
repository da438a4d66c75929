//! PCA via eigendecomposition of the sample covariance (divisor `n - 1`).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear map `x -> components * (x - mean)` onto the top-`d` principal
/// directions. Rows of `components` are orthonormal and ordered by
/// decreasing explained variance; each row's largest-magnitude entry is
/// positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

impl Projection {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    /// The identity map on `dim` coordinates.
    pub fn identity(dim: usize) -> Self {
        Projection {
            mean: vec![0.0; dim],
            components: (0..dim).map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
            explained_variance: vec![0.0; dim],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::dim(self.mean.len(), x.len()));
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((ci, xi), mi)| ci * (xi - mi)).sum())
            .collect())
    }
}

pub fn fit_projection(x: &[Vec<f64>], d: usize) -> Result<Projection> {
    if x.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            available: x.len(),
        });
    }
    let dim = x[0].len();
    if d == 0 || d > dim {
        return Err(Error::config("pca_dim", format!("must lie in 1..={dim}, got {d}")));
    }
    let n = x.len();
    let mut mean = vec![0.0; dim];
    for row in x {
        if row.len() != dim {
            return Err(Error::dim(dim, row.len()));
        }
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, dim, |i, j| x[i][j] - mean[j]);
    let cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
    let eig = cov.symmetric_eigen();

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(d);
    let mut explained_variance = Vec::with_capacity(d);
    for &k in order.iter().take(d) {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let lead = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, c)| if c.abs() > v[best].abs() { i } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
        components.push(v);
        explained_variance.push(eig.eigenvalues[k].max(0.0));
    }
    Ok(Projection {
        mean,
        components,
        explained_variance,
    })
}

pub fn project(p: &Projection, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    x.iter().map(|row| p.apply(row)).collect()
}
