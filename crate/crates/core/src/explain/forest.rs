use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ExplainError, Result};
use crate::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows each tree until its leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features tried per split; `None` means `⌈√d⌉`.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART regression tree with variance-reduction splits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf(_)))
            .count()
    }

    fn fit<R: Rng>(
        x: &[Vec<f64>],
        y: &[f64],
        rows: Vec<usize>,
        max_features: usize,
        cfg: &ForestConfig,
        rng: &mut R,
    ) -> Self {
        let mut tree = RegressionTree { nodes: Vec::new() };
        let mut features: Vec<usize> = (0..x[0].len()).collect();
        tree.grow(x, y, rows, 0, max_features, &mut features, cfg, rng);
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn grow<R: Rng>(
        &mut self,
        x: &[Vec<f64>],
        y: &[f64],
        mut rows: Vec<usize>,
        depth: usize,
        max_features: usize,
        features: &mut [usize],
        cfg: &ForestConfig,
        rng: &mut R,
    ) -> usize {
        let at = self.nodes.len();
        let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf(mean));
        let pure = rows.iter().all(|&i| y[i] == y[rows[0]]);
        if pure || rows.len() < cfg.min_samples_split || cfg.max_depth.is_some_and(|d| depth >= d) {
            return at;
        }
        let Some((feature, threshold)) = best_split(x, y, &mut rows, max_features, features, rng)
        else {
            return at;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| x[i][feature] <= threshold);
        let left = self.grow(x, y, l, depth + 1, max_features, features, cfg, rng);
        let right = self.grow(x, y, r, depth + 1, max_features, features, cfg, rng);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

/// Tries features in random order until `max_features` non-constant ones have
/// been scored; returns the split with the lowest summed squared error.
fn best_split<R: Rng>(
    x: &[Vec<f64>],
    y: &[f64],
    rows: &mut [usize],
    max_features: usize,
    features: &mut [usize],
    rng: &mut R,
) -> Option<(usize, f64)> {
    features.shuffle(rng);
    let n = rows.len() as f64;
    let total: f64 = rows.iter().map(|&i| y[i]).sum();
    let total_sq: f64 = rows.iter().map(|&i| y[i] * y[i]).sum();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut scored = 0;
    for &f in features.iter() {
        if scored >= max_features {
            break;
        }
        rows.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        if x[rows[0]][f] == x[rows[rows.len() - 1]][f] {
            continue;
        }
        scored += 1;
        let (mut sum_l, mut sq_l) = (0.0, 0.0);
        for k in 0..rows.len() - 1 {
            let v = y[rows[k]];
            sum_l += v;
            sq_l += v * v;
            let (a, b) = (x[rows[k]][f], x[rows[k + 1]][f]);
            if a == b {
                continue;
            }
            let nl = (k + 1) as f64;
            let nr = n - nl;
            let sum_r = total - sum_l;
            let sse = (sq_l - sum_l * sum_l / nl) + (total_sq - sq_l - sum_r * sum_r / nr);
            if best.is_none_or(|(s, _, _)| sse < s) {
                let mut t = a + (b - a) / 2.0;
                if t >= b {
                    t = a;
                }
                best = Some((sse, f, t));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

/// Bagged ensemble of regression trees; predicts the mean tree output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
    n_features: usize,
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], y: &[f64], cfg: &ForestConfig) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(ExplainError::Shape(format!(
                "{} inputs vs {} targets",
                x.len(),
                y.len()
            )));
        }
        let d = x[0].len();
        if d == 0 || x.iter().any(|r| r.len() != d) {
            return Err(ExplainError::Shape(
                "inputs must share one nonzero dimension".into(),
            ));
        }
        if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
            return Err(ExplainError::NonFinite("forest input".into()));
        }
        if cfg.n_trees == 0 || cfg.min_samples_split < 2 || cfg.max_features == Some(0) {
            return Err(ExplainError::Config(
                "forest needs trees, min_samples_split ≥ 2 and max_features ≥ 1".into(),
            ));
        }
        let max_features = cfg
            .max_features
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .min(d);
        let n = x.len();
        let trees = (0..cfg.n_trees)
            .map(|t| {
                let mut rng = seeded_rng(cfg.seed, t as u64);
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                RegressionTree::fit(x, y, rows, max_features, cfg, &mut rng)
            })
            .collect();
        Ok(RandomForest {
            trees,
            n_features: d,
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }
}
