//! Bagged regression forest with per-split feature subsampling.
//!
//! Each tree sees a bootstrap resample (represented as integer multiplicities
//! folded into the sample weights) and greedily minimizes weighted squared
//! error. Tree `t` draws from its own stream keyed by `(seed, t)`, so trees
//! can be grown in any order or in parallel with identical results.

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Fraction of features considered at each split.
    pub feature_subsample: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            max_depth: 12,
            min_leaf: 5,
            feature_subsample: 1.0 / 3.0,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self, key: &str) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::config(format!("{key}.{field}"), msg));
        if self.n_trees == 0 {
            return bad("n_trees", "must be >= 1");
        }
        if self.max_depth == 0 {
            return bad("max_depth", "must be >= 1");
        }
        if self.min_leaf == 0 {
            return bad("min_leaf", "must be >= 1");
        }
        if !(self.feature_subsample > 0.0 && self.feature_subsample <= 1.0) {
            return bad("feature_subsample", "must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Forest {
    trees: Vec<Tree>,
    y_min: f64,
    y_max: f64,
}

impl Forest {
    pub fn fit(p: &ForestParams, x: &[Vec<f64>], y: &[f64], w: &[f64], exec: Execution) -> Self {
        let n = y.len();
        let d = x[0].len();
        let columns: Vec<Vec<f64>> = (0..d).map(|j| x.iter().map(|r| r[j]).collect()).collect();
        let active: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
        let y_min = active.iter().map(|&i| y[i]).fold(f64::INFINITY, f64::min);
        let y_max = active.iter().map(|&i| y[i]).fold(f64::NEG_INFINITY, f64::max);
        let mtry = ((d as f64 * p.feature_subsample).ceil() as usize).clamp(1, d.max(1));
        let fallback = super::weighted_mean(y, w);

        let trees = exec::map_indexed(exec, p.n_trees, |t| {
            let mut rng = seed::rng(seed::derive(p.seed, seed::stream::TREE, t as u64));
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1;
            }
            let samples: Vec<Sample> = (0..n)
                .filter(|&i| counts[i] > 0 && w[i] > 0.0)
                .map(|i| Sample {
                    index: i,
                    count: counts[i],
                    weight: counts[i] as f64 * w[i],
                })
                .collect();
            let mut builder = Builder {
                params: p,
                columns: &columns,
                y,
                mtry,
                rng,
                nodes: Vec::new(),
            };
            if samples.is_empty() {
                builder.nodes.push(Node::Leaf(fallback));
            } else {
                builder.grow(samples, 0);
            }
            Tree { nodes: builder.nodes }
        });
        Forest { trees, y_min, y_max }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        (sum / self.trees.len() as f64).clamp(self.y_min, self.y_max)
    }
}

#[derive(Clone, Copy)]
struct Sample {
    index: usize,
    count: u32,
    weight: f64,
}

struct Builder<'a> {
    params: &'a ForestParams,
    columns: &'a [Vec<f64>],
    y: &'a [f64],
    mtry: usize,
    rng: seed::Rng,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    /// Grow the subtree for `samples`, returning its node id.
    fn grow(&mut self, mut samples: Vec<Sample>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(0.0));

        let (mut sw, mut swy) = (0.0, 0.0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut count = 0usize;
        for s in &samples {
            let yi = self.y[s.index];
            sw += s.weight;
            swy += s.weight * yi;
            lo = lo.min(yi);
            hi = hi.max(yi);
            count += s.count as usize;
        }
        let leaf_value = (swy / sw).clamp(lo, hi);

        let splittable = depth < self.params.max_depth
            && count >= 2 * self.params.min_leaf
            && lo < hi
            && !self.columns.is_empty();
        let best = if splittable { self.best_split(&mut samples, sw, swy) } else { None };
        match best {
            None => self.nodes[id] = Node::Leaf(leaf_value),
            Some(b) => {
                let (left, right): (Vec<Sample>, Vec<Sample>) = samples
                    .into_iter()
                    .partition(|s| self.columns[b.feature][s.index] <= b.threshold);
                let l = self.grow(left, depth + 1);
                let r = self.grow(right, depth + 1);
                self.nodes[id] = Node::Split {
                    feature: b.feature,
                    threshold: b.threshold,
                    left: l,
                    right: r,
                };
            }
        }
        id
    }

    fn best_split(&mut self, samples: &mut [Sample], sw: f64, swy: f64) -> Option<BestSplit> {
        let d = self.columns.len();
        let parent = swy * swy / sw;
        let min_leaf = self.params.min_leaf;
        let total_count: usize = samples.iter().map(|s| s.count as usize).sum();
        let mut best: Option<BestSplit> = None;

        for feature in index::sample(&mut self.rng, d, self.mtry).into_iter() {
            let col = &self.columns[feature];
            samples.sort_by(|a, b| col[a.index].total_cmp(&col[b.index]).then(a.index.cmp(&b.index)));
            let (mut lw, mut lwy) = (0.0, 0.0);
            let mut lcount = 0usize;
            for i in 0..samples.len() - 1 {
                let s = samples[i];
                lw += s.weight;
                lwy += s.weight * self.y[s.index];
                lcount += s.count as usize;
                let (a, b) = (col[s.index], col[samples[i + 1].index]);
                if a == b || lcount < min_leaf || total_count - lcount < min_leaf {
                    continue;
                }
                let rw = sw - lw;
                if lw <= 0.0 || rw <= 1e-12 * sw {
                    continue;
                }
                let rwy = swy - lwy;
                let score = lwy * lwy / lw + rwy * rwy / rw - parent;
                if best.as_ref().is_none_or(|bs| score > bs.score) {
                    let mid = 0.5 * (a + b);
                    let threshold = if mid < b { mid } else { a };
                    best = Some(BestSplit { feature, threshold, score });
                }
            }
        }
        best.filter(|b| b.score > 1e-12 * parent.abs().max(1e-300))
    }
}
