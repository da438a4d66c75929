use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnWeighting {
    #[default]
    Uniform,
    InverseDistance,
}

/// Brute-force Euclidean k-nearest-neighbour regressor. Distance ties go to
/// the lower training index. Zero-weight training points are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct KnnFit {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    w: Vec<f64>,
    k: usize,
    weighting: KnnWeighting,
}

impl KnnFit {
    pub fn new(x: &[Vec<f64>], y: &[f64], w: &[f64], k: usize, weighting: KnnWeighting) -> Self {
        let keep: Vec<usize> = (0..y.len()).filter(|&i| w[i] > 0.0).collect();
        KnnFit {
            x: keep.iter().map(|&i| x[i].clone()).collect(),
            y: keep.iter().map(|&i| y[i]).collect(),
            w: keep.iter().map(|&i| w[i]).collect(),
            k,
            weighting,
        }
    }

    pub fn predict(&self, q: &[f64]) -> f64 {
        let mut dist: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, row)| (row.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let k = self.k.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
            dist.truncate(k);
        }
        dist.sort_unstable_by(cmp);
        if k == 1 {
            return self.y[dist[0].1];
        }

        let exact: Vec<usize> = dist.iter().filter(|(d, _)| *d == 0.0).map(|(_, i)| *i).collect();
        let (mut sw, mut swy) = (0.0, 0.0);
        match self.weighting {
            KnnWeighting::InverseDistance if !exact.is_empty() => {
                for i in exact {
                    sw += self.w[i];
                    swy += self.w[i] * self.y[i];
                }
            }
            KnnWeighting::InverseDistance => {
                for (d2, i) in &dist {
                    let wi = self.w[*i] / d2.sqrt();
                    sw += wi;
                    swy += wi * self.y[*i];
                }
            }
            KnnWeighting::Uniform => {
                for (_, i) in &dist {
                    sw += self.w[*i];
                    swy += self.w[*i] * self.y[*i];
                }
            }
        }
        swy / sw
    }
}
