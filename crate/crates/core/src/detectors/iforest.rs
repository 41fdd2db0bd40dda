use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DetectorId, DetectorScore};
use crate::error::{Error, Result};

pub const DEFAULT_TREES: usize = 100;
pub const DEFAULT_SUBSAMPLE: usize = 256;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum INode {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    External {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ITree {
    nodes: Vec<INode>,
}

impl ITree {
    fn path_length(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[i] {
                INode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature] < threshold { left } else { right } as usize;
                    depth += 1.0;
                }
                INode::External { size } => return depth + average_path_length(size),
            }
        }
    }

    fn depth(&self) -> usize {
        fn go(nodes: &[INode], i: usize) -> usize {
            match nodes[i] {
                INode::Split { left, right, .. } => 1 + go(nodes, left as usize).max(go(nodes, right as usize)),
                INode::External { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    trees: Vec<ITree>,
    subsample_size: usize,
    n_features: usize,
}

impl IsolationForest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_size
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(ITree::depth).max().unwrap_or(0)
    }

    /// Mean path length of `x` over the trees.
    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Expected path length of an unsuccessful search in a binary search tree
/// of `n` points: 0 for n <= 1, 1 for n = 2, `2 H(n-1) - 2(n-1)/n` otherwise.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

pub fn fit_iforest(xs: &[Vec<f64>], n_trees: usize, subsample: usize, seed: u64) -> Result<IsolationForest> {
    if xs.len() < 2 {
        return Err(Error::TooFewExamples(format!("isolation forest needs 2 rows, got {}", xs.len())));
    }
    if n_trees == 0 || subsample < 2 {
        return Err(Error::InvalidArgument("isolation forest needs n_trees >= 1 and subsample >= 2".into()));
    }
    let d = xs[0].len();
    if let Some(x) = xs.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    if xs.iter().all(|x| x == &xs[0]) {
        return Err(Error::DegenerateData("all rows are identical".into()));
    }
    let psi = subsample.min(xs.len());
    let cap = (psi as f64).log2().ceil() as usize;
    let trees = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let mut rows = sample(&mut rng, xs.len(), psi).into_vec();
            let mut nodes = Vec::new();
            grow(xs, &mut rows, 0, cap, &mut rng, &mut nodes);
            ITree { nodes }
        })
        .collect();
    Ok(IsolationForest {
        trees,
        subsample_size: psi,
        n_features: d,
    })
}

fn grow(xs: &[Vec<f64>], rows: &mut [usize], depth: usize, cap: usize, rng: &mut ChaCha8Rng, nodes: &mut Vec<INode>) -> u32 {
    let id = nodes.len() as u32;
    nodes.push(INode::External { size: rows.len() });
    if rows.len() <= 1 || depth >= cap {
        return id;
    }
    // Attributes with a non-degenerate range at this node.
    let d = xs[rows[0]].len();
    let mut spans: Vec<(usize, f64, f64)> = Vec::new();
    #[allow(clippy::needless_range_loop)]
    for f in 0..d {
        let (lo, hi) = rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(xs[i][f]), hi.max(xs[i][f])));
        if lo < hi {
            spans.push((f, lo, hi));
        }
    }
    if spans.is_empty() {
        return id;
    }
    let (feature, lo, hi) = spans[rng.gen_range(0..spans.len())];
    // Split strictly above the minimum so both sides are non-empty.
    let mut threshold = rng.gen_range(lo..hi);
    if threshold <= lo {
        threshold = lo + (hi - lo) / 2.0;
        if threshold <= lo {
            threshold = hi;
        }
    }
    let mut mid = 0;
    for k in 0..rows.len() {
        if xs[rows[k]][feature] < threshold {
            rows.swap(mid, k);
            mid += 1;
        }
    }
    let (l, r) = rows.split_at_mut(mid);
    let left = grow(xs, l, depth + 1, cap, rng, nodes);
    let right = grow(xs, r, depth + 1, cap, rng, nodes);
    nodes[id as usize] = INode::Split {
        feature,
        threshold,
        left,
        right,
    };
    id
}

/// Anomaly score `2^(-E[h(x)] / c(psi))`.
pub fn score_iforest(f: &IsolationForest, x: &[f64]) -> DetectorScore {
    DetectorScore {
        name: DetectorId::IForest,
        score: anomaly_score(f.mean_path_length(x), f.subsample_size),
    }
}

fn anomaly_score(mean_path: f64, psi: usize) -> f64 {
    (-mean_path / average_path_length(psi)).exp2()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizer_values() {
        assert_eq!(average_path_length(1), 0.0);
        assert_eq!(average_path_length(2), 1.0);
        // c(3) = 2 (ln 2 + gamma) - 4/3
        let want = 2.0 * (2f64.ln() + EULER_GAMMA) - 4.0 / 3.0;
        assert!((average_path_length(3) - want).abs() < 1e-15);
        for psi in [2, 3, 10, 256] {
            assert!((anomaly_score(average_path_length(psi), psi) - 0.5).abs() < 1e-15);
            assert!(anomaly_score(average_path_length(psi) + 1.0, psi) < 0.5);
        }
    }

    #[test]
    fn two_points_isolated_at_depth_one() {
        let xs = vec![vec![0.0, 1.0], vec![1.0, 1.0]];
        let f = fit_iforest(&xs, 1, 256, 9).unwrap();
        assert_eq!(f.subsample_size(), 2);
        for x in &xs {
            assert_eq!(f.mean_path_length(x), 1.0);
        }
    }

    #[test]
    fn planted_outlier_scores_highest() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut xs: Vec<Vec<f64>> = (0..256)
            .map(|_| vec![0.5 + rng.gen_range(-0.05..0.05), 0.5 + rng.gen_range(-0.05..0.05)])
            .collect();
        xs.push(vec![3.0, -2.0]);
        let f = fit_iforest(&xs, DEFAULT_TREES, DEFAULT_SUBSAMPLE, 7).unwrap();
        let scores: Vec<f64> = xs.iter().map(|x| score_iforest(&f, x).score).collect();
        let top = scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(top, 256);
        assert!(scores.iter().all(|&s| s > 0.0 && s < 1.0));
    }

    #[test]
    fn depth_cap_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<Vec<f64>> = (0..1000).map(|_| vec![rng.gen(), rng.gen(), rng.gen()]).collect();
        let f = fit_iforest(&xs, 50, 64, 3).unwrap();
        assert!(f.max_depth() <= 6);
        assert_eq!(f, fit_iforest(&xs, 50, 64, 3).unwrap());
        assert_ne!(f, fit_iforest(&xs, 50, 64, 4).unwrap());
    }

    #[test]
    fn constant_attribute_is_never_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<Vec<f64>> = (0..100).map(|_| vec![0.25, rng.gen()]).collect();
        let f = fit_iforest(&xs, 20, 32, 0).unwrap();
        for t in &f.trees {
            for n in &t.nodes {
                if let INode::Split { feature, .. } = n {
                    assert_eq!(*feature, 1);
                }
            }
        }
    }

    #[test]
    fn identical_rows_rejected() {
        let xs = vec![vec![1.0, 2.0]; 5];
        assert!(matches!(fit_iforest(&xs, 10, 256, 0), Err(Error::DegenerateData(_))));
        assert!(matches!(fit_iforest(&xs[..1], 10, 256, 0), Err(Error::TooFewExamples(_))));
    }
}
