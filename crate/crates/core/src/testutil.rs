//! Random ensembles and reference matrices for tests and benchmarks.

use rand::Rng;

use crate::model::{Aggregation, Ensemble, NodeSpec, Tree};

#[derive(Debug, Clone)]
pub struct RandomEnsembleConfig {
    pub n_trees: usize,
    pub n_features: usize,
    pub max_depth: usize,
    /// Probability that a node above the depth cap is split further.
    pub split_prob: f64,
    pub aggregation: Aggregation,
    /// When set to `k`, thresholds are drawn from `{(i + 0.5) / k : 0 <= i < k}`
    /// so that a grid of step `1/k` hits every cell between thresholds.
    pub threshold_grid: Option<u32>,
}

impl Default for RandomEnsembleConfig {
    fn default() -> Self {
        RandomEnsembleConfig {
            n_trees: 3,
            n_features: 3,
            max_depth: 3,
            split_prob: 0.8,
            aggregation: Aggregation::SumLogistic,
            threshold_grid: None,
        }
    }
}

/// Random ensemble with thresholds in `(0, 1)`. Every leaf is reachable.
pub fn random_ensemble<R: Rng>(rng: &mut R, cfg: &RandomEnsembleConfig) -> Ensemble {
    let trees = (0..cfg.n_trees)
        .map(|_| {
            let mut bounds = vec![(0.0, 1.0); cfg.n_features];
            Tree::from_spec(&random_node(rng, cfg, 0, &mut bounds)).expect("valid random tree")
        })
        .collect();
    let base = match cfg.aggregation {
        Aggregation::SumLogistic => rng.gen_range(-0.5..0.5),
        Aggregation::AverageProb => 0.0,
    };
    Ensemble::new(trees, base, cfg.aggregation, cfg.n_features).expect("valid random ensemble")
}

fn random_leaf<R: Rng>(rng: &mut R, cfg: &RandomEnsembleConfig) -> NodeSpec {
    let value = match cfg.aggregation {
        Aggregation::SumLogistic => rng.gen_range(-1.0..1.0),
        Aggregation::AverageProb => rng.gen_range(0.0..1.0),
    };
    NodeSpec::Leaf { value }
}

fn random_node<R: Rng>(
    rng: &mut R,
    cfg: &RandomEnsembleConfig,
    depth: usize,
    bounds: &mut [(f64, f64)],
) -> NodeSpec {
    let split = depth == 0 || (depth < cfg.max_depth && rng.gen_bool(cfg.split_prob));
    if !split || cfg.max_depth == 0 {
        return random_leaf(rng, cfg);
    }
    let feature = rng.gen_range(0..cfg.n_features);
    let (lo, hi) = bounds[feature];
    let threshold = match cfg.threshold_grid {
        Some(k) => {
            let grid = |i: i64| (i as f64 + 0.5) / k as f64;
            let first = ((lo * k as f64).floor() as i64 - 1).max(0);
            let last = ((hi * k as f64).ceil() as i64 + 1).min(k as i64 - 1);
            let inside: Vec<i64> = (first..=last).filter(|&i| lo < grid(i) && grid(i) < hi).collect();
            if inside.is_empty() {
                return random_leaf(rng, cfg);
            }
            grid(inside[rng.gen_range(0..inside.len())])
        }
        None => lo + (hi - lo) * rng.gen_range(0.05..0.95),
    };
    bounds[feature].1 = threshold;
    let left = random_node(rng, cfg, depth + 1, bounds);
    bounds[feature] = (threshold, hi);
    let right = random_node(rng, cfg, depth + 1, bounds);
    bounds[feature] = (lo, hi);
    NodeSpec::Split {
        feature,
        threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Random rows of output configurations with `n_leaves` distinct ids per column.
pub fn random_rows<R: Rng>(rng: &mut R, n_rows: usize, n_trees: usize, n_leaves: u16) -> Vec<Vec<u8>> {
    (0..n_rows)
        .map(|_| {
            (0..n_trees)
                .map(|_| rng.gen_range(0..n_leaves) as u8)
                .collect()
        })
        .collect()
}
