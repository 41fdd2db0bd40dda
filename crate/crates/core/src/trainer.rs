//! Small exact-split ensemble learners: logistic gradient boosting and a
//! bagged Gini random forest.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{logistic, Aggregation, Ensemble, NodeSpec, Tree, MAX_TREES};

/// Deepest trees the byte leaf ids can address (2^8 leaves).
pub const MAX_DEPTH: usize = 8;

/// L2 penalty in the Newton leaf values. Keeps pure leaves finite.
const LEAF_L2: f64 = 1.0;
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Boosting,
    Forest,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boosting" => Ok(TrainMode::Boosting),
            "forest" => Ok(TrainMode::Forest),
            other => Err(Error::InvalidArgument(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub mode: TrainMode,
    pub seed: u64,
    pub min_samples_leaf: usize,
    /// Splits must reduce the node impurity by more than this.
    pub min_split_gain: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_trees: 50,
            max_depth: 4,
            learning_rate: 0.3,
            mode: TrainMode::Boosting,
            seed: 0,
            min_samples_leaf: 5,
            min_split_gain: 0.0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.n_trees > MAX_TREES {
            return Err(Error::ConfigLimit(format!(
                "n_trees must be in 1..={MAX_TREES}, got {}",
                self.n_trees
            )));
        }
        if self.max_depth == 0 || self.max_depth > MAX_DEPTH {
            return Err(Error::ConfigLimit(format!(
                "max_depth must be in 1..={MAX_DEPTH}, got {}",
                self.max_depth
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::ConfigLimit(format!(
                "learning_rate must be in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::ConfigLimit("min_samples_leaf must be positive".into()));
        }
        if !(self.min_split_gain >= 0.0 && self.min_split_gain.is_finite()) {
            return Err(Error::ConfigLimit(format!(
                "min_split_gain must be finite and non-negative, got {}",
                self.min_split_gain
            )));
        }
        Ok(())
    }
}

pub fn train(xs: &[Vec<f64>], ys: &[u8], cfg: &TrainConfig) -> Result<Ensemble> {
    cfg.validate()?;
    let n_features = check_data(xs, ys)?;
    match cfg.mode {
        TrainMode::Boosting => train_boosting(xs, ys, n_features, cfg),
        TrainMode::Forest => train_forest(xs, ys, n_features, cfg),
    }
}

fn check_data(xs: &[Vec<f64>], ys: &[u8]) -> Result<usize> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let n_features = xs.first().map_or(0, Vec::len);
    if n_features == 0 {
        return Err(Error::TooFewExamples("no features".into()));
    }
    for x in xs {
        if x.len() != n_features {
            return Err(Error::DimensionMismatch {
                expected: n_features,
                got: x.len(),
            });
        }
        if let Some(f) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(f));
        }
    }
    if let Some(&y) = ys.iter().find(|&&y| y > 1) {
        return Err(Error::InvalidArgument(format!("label {y} is not binary")));
    }
    let ones = ys.iter().filter(|&&y| y == 1).count();
    if ones < 2 || ys.len() - ones < 2 {
        return Err(Error::DegenerateLabels);
    }
    Ok(n_features)
}

/// Sum statistics of a node's targets.
#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    n: f64,
    s1: f64,
    s2: f64,
}

impl Stats {
    fn add(&mut self, t: f64) {
        self.n += 1.0;
        self.s1 += t;
        self.s2 += t * t;
    }

    fn sub(self, o: Stats) -> Stats {
        Stats {
            n: self.n - o.n,
            s1: self.s1 - o.s1,
            s2: self.s2 - o.s2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Impurity {
    /// Sum of squared deviations.
    Sse,
    /// Gini impurity times node size, for 0/1 targets.
    Gini,
}

impl Impurity {
    fn of(self, s: Stats) -> f64 {
        if s.n <= 0.0 {
            return 0.0;
        }
        match self {
            Impurity::Sse => (s.s2 - s.s1 * s.s1 / s.n).max(0.0),
            Impurity::Gini => 2.0 * s.s1 * (s.n - s.s1) / s.n,
        }
    }
}

struct Grower<'a, R> {
    xs: &'a [Vec<f64>],
    targets: &'a [f64],
    impurity: Impurity,
    max_depth: usize,
    min_leaf: usize,
    min_gain: f64,
    /// Features considered per split; `None` means all.
    max_features: Option<usize>,
    n_features: usize,
    rng: R,
}

impl<R: Rng> Grower<'_, R> {
    fn grow<L>(&mut self, rows: &mut [usize], depth: usize, leaf: &L) -> NodeSpec
    where
        L: Fn(&[usize]) -> f64,
    {
        if depth >= self.max_depth || rows.len() < 2 * self.min_leaf {
            return NodeSpec::Leaf { value: leaf(rows) };
        }
        let Some((feature, threshold)) = self.best_split(rows) else {
            return NodeSpec::Leaf { value: leaf(rows) };
        };
        let xs = self.xs;
        let mid = partition(rows, |&i| xs[i][feature] < threshold);
        let (l, r) = rows.split_at_mut(mid);
        let left = self.grow(l, depth + 1, leaf);
        let right = self.grow(r, depth + 1, leaf);
        NodeSpec::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Highest-gain split; ties go to the lowest feature, then the lowest threshold.
    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64)> {
        let mut features: Vec<usize> = (0..self.n_features).collect();
        if let Some(k) = self.max_features {
            features.shuffle(&mut self.rng);
            features.truncate(k);
            features.sort_unstable();
        }
        let mut total = Stats::default();
        for &i in rows {
            total.add(self.targets[i]);
        }
        let parent = self.impurity.of(total);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = rows.to_vec();
        for f in features {
            let xs = self.xs;
            sorted.sort_by(|&a, &b| xs[a][f].total_cmp(&xs[b][f]));
            let mut left = Stats::default();
            for k in 0..sorted.len() - 1 {
                left.add(self.targets[sorted[k]]);
                let a = xs[sorted[k]][f];
                let b = xs[sorted[k + 1]][f];
                if a == b || k + 1 < self.min_leaf || sorted.len() - k - 1 < self.min_leaf {
                    continue;
                }
                let gain = parent - self.impurity.of(left) - self.impurity.of(total.sub(left));
                if gain > self.min_gain && best.is_none_or(|(g, _, _)| gain > g) {
                    let mut t = a + (b - a) / 2.0;
                    if t <= a {
                        t = b;
                    }
                    best = Some((gain, f, t));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Moves rows satisfying `pred` to the front; returns their count.
fn partition<F: Fn(&usize) -> bool>(rows: &mut [usize], pred: F) -> usize {
    let mut mid = 0;
    for k in 0..rows.len() {
        if pred(&rows[k]) {
            rows.swap(mid, k);
            mid += 1;
        }
    }
    mid
}

fn train_boosting(xs: &[Vec<f64>], ys: &[u8], n_features: usize, cfg: &TrainConfig) -> Result<Ensemble> {
    let n = xs.len();
    let prior = ys.iter().map(|&y| y as f64).sum::<f64>() / n as f64;
    let base = (prior / (1.0 - prior)).ln();
    let mut raw = vec![base; n];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut residual = vec![0.0; n];
    let mut hessian = vec![0.0; n];
    for _ in 0..cfg.n_trees {
        for i in 0..n {
            let p = logistic(raw[i]);
            residual[i] = ys[i] as f64 - p;
            hessian[i] = p * (1.0 - p);
        }
        let mut grower = Grower {
            xs,
            targets: &residual,
            impurity: Impurity::Sse,
            max_depth: cfg.max_depth,
            min_leaf: cfg.min_samples_leaf,
            min_gain: cfg.min_split_gain.max(MIN_GAIN),
            max_features: None,
            n_features,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        };
        let newton = |rows: &[usize]| {
            let g: f64 = rows.iter().map(|&i| residual[i]).sum();
            let h: f64 = rows.iter().map(|&i| hessian[i]).sum();
            cfg.learning_rate * g / (h + LEAF_L2)
        };
        let mut rows: Vec<usize> = (0..n).collect();
        let spec = grower.grow(&mut rows, 0, &newton);
        let tree = Tree::from_spec(&spec)?;
        for (r, x) in raw.iter_mut().zip(xs) {
            *r += tree.leaf_value(tree.leaf_id(x));
        }
        trees.push(tree);
    }
    Ensemble::new(trees, base, Aggregation::SumLogistic, n_features)
}

fn train_forest(xs: &[Vec<f64>], ys: &[u8], n_features: usize, cfg: &TrainConfig) -> Result<Ensemble> {
    let n = xs.len();
    let targets: Vec<f64> = ys.iter().map(|&y| y as f64).collect();
    let max_features = (n_features as f64).sqrt().ceil() as usize;
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for t in 0..cfg.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(t as u64));
        let mut rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let mut grower = Grower {
            xs,
            targets: &targets,
            impurity: Impurity::Gini,
            max_depth: cfg.max_depth,
            min_leaf: cfg.min_samples_leaf,
            min_gain: cfg.min_split_gain.max(MIN_GAIN),
            max_features: Some(max_features),
            n_features,
            rng,
        };
        let fraction = |rows: &[usize]| {
            rows.iter().map(|&i| targets[i]).sum::<f64>() / rows.len() as f64
        };
        let spec = grower.grow(&mut rows, 0, &fraction);
        trees.push(Tree::from_spec(&spec)?);
    }
    Ensemble::new(trees, 0.0, Aggregation::AverageProb, n_features)
}

/// Mean logistic loss of a boosted ensemble using only its first `n_trees` trees.
pub fn logistic_loss_prefix(e: &Ensemble, xs: &[Vec<f64>], ys: &[u8], n_trees: usize) -> f64 {
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let raw = e.base_score()
            + e.trees()[..n_trees]
                .iter()
                .map(|t| t.leaf_value(t.leaf_id(x)))
                .sum::<f64>();
        let p = logistic(raw).clamp(1e-15, 1.0 - 1e-15);
        total -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    total / xs.len() as f64
}
