//! Nonparametric regression behind one interface. Every estimator in the
//! pipeline (nuisances, shift function, quality-gain model) is a call to
//! [`fit_regressor`] with a [`RegressorSpec`].
//!
//! The spec doubles as the hypothesis class and its regularizer: a ridge
//! penalty for the linear class, `k` for nearest neighbours, and the depth
//! and leaf-size limits for the forest.

mod forest;
mod knn;
mod pca;
mod ridge;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

pub use forest::ForestParams;
pub use knn::KnnWeighting;
pub use pca::{fit_projection, project, Projection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegressorSpec {
    /// Weighted mean; the intercept-only class.
    Constant,
    /// Weighted least squares with `lambda * ||coef||^2`; intercept unpenalized.
    /// The loss is the weighted *sum* of squares, not the mean.
    Ridge { lambda: f64 },
    Knn {
        k: usize,
        #[serde(default)]
        weighting: KnnWeighting,
    },
    TreeEnsemble(ForestParams),
}

impl Default for RegressorSpec {
    fn default() -> Self {
        RegressorSpec::TreeEnsemble(ForestParams::default())
    }
}

impl RegressorSpec {
    pub fn ridge(lambda: f64) -> Self {
        RegressorSpec::Ridge { lambda }
    }

    pub fn knn(k: usize) -> Self {
        RegressorSpec::Knn {
            k,
            weighting: KnnWeighting::Uniform,
        }
    }

    /// Check parameter ranges; `key` names the config location in errors.
    pub fn validate(&self, key: &str) -> Result<()> {
        match self {
            RegressorSpec::Constant => Ok(()),
            RegressorSpec::Ridge { lambda } => {
                if lambda.is_finite() && *lambda >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::config(format!("{key}.lambda"), "must be finite and >= 0"))
                }
            }
            RegressorSpec::Knn { k, .. } => {
                if *k >= 1 {
                    Ok(())
                } else {
                    Err(Error::config(format!("{key}.k"), "must be >= 1"))
                }
            }
            RegressorSpec::TreeEnsemble(p) => p.validate(key),
        }
    }

    /// Copy with any internal randomness re-keyed by `salt`. Only the
    /// forest is randomized; other kinds are returned unchanged.
    pub fn reseeded(&self, salt: u64) -> Self {
        match self {
            RegressorSpec::TreeEnsemble(p) => RegressorSpec::TreeEnsemble(ForestParams {
                seed: crate::seed::derive(p.seed, crate::seed::stream::REGRESSOR, salt),
                ..p.clone()
            }),
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Predictor {
    Constant { value: f64 },
    Linear(ridge::LinearFit),
    Knn(knn::KnnFit),
    Forest(forest::Forest),
}

/// A fitted regressor. Immutable; prediction is pure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    dim: usize,
    spec: RegressorSpec,
    n_samples: usize,
    predictor: Predictor,
}

impl RegressionModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> &RegressorSpec {
        &self.spec
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Linear coefficients and intercept, for ridge and constant models.
    pub fn linear_coefficients(&self) -> Option<(&[f64], f64)> {
        match &self.predictor {
            Predictor::Linear(f) => Some((&f.coef, f.intercept)),
            Predictor::Constant { value } => Some((&[], *value)),
            _ => None,
        }
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::dim(self.dim, x.len()));
        }
        Ok(match &self.predictor {
            Predictor::Constant { value } => *value,
            Predictor::Linear(f) => f.predict(x),
            Predictor::Knn(f) => f.predict(x),
            Predictor::Forest(f) => f.predict(x),
        })
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        x.iter().map(|row| self.predict_one(row)).collect()
    }
}

/// Fit with the default execution mode.
pub fn fit_regressor(
    spec: &RegressorSpec,
    x: &[Vec<f64>],
    y: &[f64],
    weights: Option<&[f64]>,
) -> Result<RegressionModel> {
    fit_regressor_with(spec, x, y, weights, Execution::default())
}

pub fn fit_regressor_with(
    spec: &RegressorSpec,
    x: &[Vec<f64>],
    y: &[f64],
    weights: Option<&[f64]>,
    exec: Execution,
) -> Result<RegressionModel> {
    spec.validate("regressor")?;
    if x.is_empty() {
        return Err(Error::Empty("regression needs at least one sample".into()));
    }
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(format!("{} inputs vs {} targets", x.len(), y.len())));
    }
    let dim = x[0].len();
    for row in x {
        if row.len() != dim {
            return Err(Error::dim(dim, row.len()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("regression input".into()));
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression target".into()));
    }
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != y.len() {
                return Err(Error::LengthMismatch(format!("{} weights vs {} targets", w.len(), y.len())));
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::NonFinite("weights must be finite and nonnegative".into()));
            }
            if !w.iter().any(|v| *v > 0.0) {
                return Err(Error::Degenerate("all regression weights are zero".into()));
            }
            w.to_vec()
        }
        None => vec![1.0; y.len()],
    };

    let predictor = match spec {
        RegressorSpec::Constant => Predictor::Constant {
            value: weighted_mean(y, &w),
        },
        RegressorSpec::Ridge { lambda } => Predictor::Linear(ridge::fit(x, y, &w, *lambda)?),
        RegressorSpec::Knn { k, weighting } => Predictor::Knn(knn::KnnFit::new(x, y, &w, *k, *weighting)),
        RegressorSpec::TreeEnsemble(p) => Predictor::Forest(forest::Forest::fit(p, x, y, &w, exec)),
    };
    Ok(RegressionModel {
        dim,
        spec: spec.clone(),
        n_samples: y.len(),
        predictor,
    })
}

pub(crate) fn weighted_mean(y: &[f64], w: &[f64]) -> f64 {
    let (mut sw, mut swy) = (0.0, 0.0);
    for (yi, wi) in y.iter().zip(w) {
        sw += wi;
        swy += wi * yi;
    }
    swy / sw
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..d).map(|j| ((i * (j + 3)) % 17) as f64 / 4.0 - 2.0 + j as f64 * 0.1).collect())
            .collect()
    }

    fn all_specs() -> Vec<RegressorSpec> {
        vec![
            RegressorSpec::Constant,
            RegressorSpec::ridge(0.0),
            RegressorSpec::ridge(2.5),
            RegressorSpec::knn(3),
            RegressorSpec::Knn { k: 4, weighting: KnnWeighting::InverseDistance },
            RegressorSpec::TreeEnsemble(ForestParams { n_trees: 20, ..Default::default() }),
        ]
    }

    #[test]
    fn ridge_identity_line() {
        let m = fit_regressor(&RegressorSpec::ridge(0.0), &[vec![0.0], vec![1.0]], &[0.0, 1.0], None).unwrap();
        assert!((m.predict_one(&[0.5]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_target_is_reproduced() {
        let x = grid(40, 3);
        let y = vec![3.0; 40];
        for spec in all_specs() {
            let m = fit_regressor(&spec, &x, &y, None).unwrap();
            for p in m.predict(&grid(15, 3)).unwrap() {
                let tol = if matches!(spec, RegressorSpec::TreeEnsemble(_)) { 1e-9 } else { 0.0 };
                assert!((p - 3.0).abs() <= tol, "{spec:?} gave {p}");
            }
        }
    }

    #[test]
    fn infinite_shrinkage_gives_weighted_mean() {
        let x = grid(30, 2);
        let y: Vec<f64> = x.iter().map(|r| r[0] - r[1]).collect();
        let w: Vec<f64> = (0..30).map(|i| 1.0 + (i % 3) as f64).collect();
        let mean = weighted_mean(&y, &w);
        let m = fit_regressor(&RegressorSpec::ridge(1e12), &x, &y, Some(&w)).unwrap();
        for p in m.predict(&x).unwrap() {
            assert!((p - mean).abs() < 1e-6);
        }
    }

    #[test]
    fn predict_contract() {
        let x = grid(20, 2);
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let m = fit_regressor(&RegressorSpec::knn(1), &x, &y, None).unwrap();
        assert!(m.predict(&[]).unwrap().is_empty());
        assert!(matches!(m.predict_one(&[0.0]), Err(Error::DimensionMismatch { .. })));
        let a = m.predict(&x).unwrap();
        assert_eq!(a, m.predict(&x).unwrap());
    }

    #[test]
    fn knn_one_returns_training_label() {
        let x: Vec<Vec<f64>> = (0..25).map(|i| vec![i as f64, (i * i) as f64 * 0.1]).collect();
        let y: Vec<f64> = (0..25).map(|i| (i as f64).sin()).collect();
        let m = fit_regressor(&RegressorSpec::knn(1), &x, &y, None).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(m.predict_one(xi).unwrap(), *yi);
        }
    }

    #[test]
    fn fit_errors() {
        let spec = RegressorSpec::ridge(1.0);
        assert!(matches!(fit_regressor(&spec, &[], &[], None), Err(Error::Empty(_))));
        assert!(matches!(
            fit_regressor(&spec, &[vec![0.0], vec![1.0]], &[1.0, 2.0], Some(&[0.0, 0.0])),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            fit_regressor(&spec, &[vec![f64::NAN]], &[1.0], None),
            Err(Error::NonFinite(_))
        ));
        assert!(RegressorSpec::ridge(-1.0).validate("x").is_err());
    }

    #[test]
    fn specs_parse_from_toml() {
        let s: RegressorSpec = toml::from_str("kind = \"ridge\"\nlambda = 0.5").unwrap();
        assert_eq!(s, RegressorSpec::ridge(0.5));
        let s: RegressorSpec = toml::from_str("kind = \"tree_ensemble\"\nn_trees = 10").unwrap();
        match s {
            RegressorSpec::TreeEnsemble(p) => {
                assert_eq!(p.n_trees, 10);
                assert_eq!(p.max_depth, 12);
            }
            _ => panic!(),
        }
        assert!(toml::from_str::<RegressorSpec>("kind = \"ridge\"\nlambda = 0.5\nfoo = 1").is_err());
    }
}
