//! Datasets, min-max normalization and stratified folds.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<u8>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, xs: Vec<Vec<f64>>, ys: Vec<u8>) -> Result<Dataset> {
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                got: ys.len(),
            });
        }
        let d = xs.first().map_or(0, Vec::len);
        for (i, x) in xs.iter().enumerate() {
            if x.len() != d {
                return Err(Error::at(i, Error::DimensionMismatch { expected: d, got: x.len() }));
            }
            if let Some(f) = x.iter().position(|v| !v.is_finite()) {
                return Err(Error::at(i, Error::NonFiniteInput(f)));
            }
        }
        if let Some(i) = ys.iter().position(|&y| y > 1) {
            return Err(Error::at(i, Error::InvalidArgument(format!("label {} is not binary", ys[i]))));
        }
        Ok(Dataset {
            name: name.into(),
            xs,
            ys,
        })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.xs.first().map_or(0, Vec::len)
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            xs: rows.iter().map(|&i| self.xs[i].clone()).collect(),
            ys: rows.iter().map(|&i| self.ys[i]).collect(),
        }
    }
}

/// Per-feature `(min, max)` of a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanges {
    pub ranges: Vec<(f64, f64)>,
}

impl FeatureRanges {
    pub fn fit(xs: &[Vec<f64>]) -> Result<FeatureRanges> {
        let first = xs.first().ok_or(Error::EmptyList)?;
        let mut ranges: Vec<(f64, f64)> = first.iter().map(|&v| (v, v)).collect();
        for x in xs {
            for (r, &v) in ranges.iter_mut().zip(x) {
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
        Ok(FeatureRanges { ranges })
    }

    /// Maps into `[0, 1]`, clamping values outside the fitted range. Constant
    /// features map to 0.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.ranges)
            .map(|(&v, &(lo, hi))| {
                if hi > lo {
                    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.ranges)
            .map(|(&v, &(lo, hi))| lo + v * (hi - lo))
            .collect()
    }

    pub fn normalize_all(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| self.normalize(x)).collect()
    }
}

pub const SYNTHETIC: [&str; 2] = ["xor-grid", "interleaved-clusters"];
pub const DEFAULT_SYNTHETIC_ROWS: usize = 4000;

const XOR_FEATURES: usize = 16;
const XOR_CUT: f64 = 0.4;
const CLUSTER_NOISE: f64 = 0.1;

/// Built-in synthetic benchmark by name.
///
/// * `xor-grid`: 16 uniform features; the label is the XOR of `x0 > 0.4` and
///   `x1 > 0.6`, the remaining 14 features are noise.
/// * `interleaved-clusters`: two interleaved half circles in 2 dimensions with
///   Gaussian noise of standard deviation 0.1.
pub fn synthetic(name: &str, n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (xs, ys) = match name {
        "xor-grid" => (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..XOR_FEATURES).map(|_| rng.gen()).collect();
                let y = ((x[0] > XOR_CUT) ^ (x[1] > 1.0 - XOR_CUT)) as u8;
                (x, y)
            })
            .unzip(),
        "interleaved-clusters" => {
            let noise = Normal::new(0.0, CLUSTER_NOISE).expect("valid normal");
            (0..n)
                .map(|i| {
                    let y = (i % 2) as u8;
                    let t = rng.gen_range(0.0..std::f64::consts::PI);
                    let (cx, cy) = if y == 0 {
                        (t.cos(), t.sin())
                    } else {
                        (1.0 - t.cos(), 0.5 - t.sin())
                    };
                    (vec![cx + noise.sample(&mut rng), cy + noise.sample(&mut rng)], y)
                })
                .unzip()
        }
        other => return Err(Error::InvalidArgument(format!("unknown dataset '{other}'"))),
    };
    Dataset::new(name, xs, ys)
}

/// Stratified k-fold split. Returns `(train, test)` row indices per fold.
/// Each class is shuffled and dealt round-robin, continuing where the
/// previous class stopped, so fold sizes differ by at most one.
pub fn kfold_split(ys: &[u8], k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::TooFewExamples(format!("need at least 2 folds, got {k}")));
    }
    if ys.len() < k {
        return Err(Error::TooFewExamples(format!("{} rows cannot fill {k} folds", ys.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut slot = 0;
    for class in 0..=1u8 {
        let mut rows: Vec<usize> = (0..ys.len()).filter(|&i| ys[i] == class).collect();
        rows.shuffle(&mut rng);
        for i in rows {
            tests[slot % k].push(i);
            slot += 1;
        }
    }
    Ok(tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; ys.len()];
            for &i in &test {
                in_test[i] = true;
            }
            let train = (0..ys.len()).filter(|&i| !in_test[i]).collect();
            (train, test)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_folds_of_two() {
        let ys = vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let folds = kfold_split(&ys, 5, 1).unwrap();
        assert_eq!(folds.len(), 5);
        for (train, test) in &folds {
            assert_eq!(test.len(), 2);
            assert_eq!(train.len(), 8);
        }
    }

    #[test]
    fn stratified_minority() {
        let ys = vec![1, 1, 1, 1, 1, 1, 1, 1, 0, 0];
        for seed in 0..10 {
            for (_, test) in kfold_split(&ys, 2, seed).unwrap() {
                assert_eq!(test.iter().filter(|&&i| ys[i] == 0).count(), 1);
            }
        }
    }

    #[test]
    fn folds_partition_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(5..200);
            let k = rng.gen_range(2..=5);
            let ys: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let folds = kfold_split(&ys, k, rng.gen()).unwrap();
            let mut seen: Vec<usize> = folds.iter().flat_map(|(_, t)| t.clone()).collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
            let ones = ys.iter().filter(|&&y| y == 1).count() as f64;
            for (train, test) in &folds {
                assert_eq!(train.len() + test.len(), n);
                let fold_ones = test.iter().filter(|&&i| ys[i] == 1).count() as f64;
                let expected = ones * test.len() as f64 / n as f64;
                assert!((fold_ones - expected).abs() <= 1.0 + 1e-9);
            }
        }
        assert!(kfold_split(&[0, 1], 1, 0).is_err());
        assert!(kfold_split(&[0, 1], 3, 0).is_err());
    }

    #[test]
    fn normalization_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![rng.gen_range(-50.0..50.0), rng.gen_range(1e3..1e4), 7.0])
            .collect();
        let r = FeatureRanges::fit(&xs).unwrap();
        for x in &xs {
            let z = r.normalize(x);
            assert!(z.iter().all(|v| (0.0..=1.0).contains(v)));
            let back = r.denormalize(&z);
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
        assert_eq!(r.normalize(&[1e9, -1e9, 7.0]), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn synthetic_sets() {
        for name in SYNTHETIC {
            let ds = synthetic(name, 1000, 5).unwrap();
            assert_eq!(ds.len(), 1000);
            let ones = ds.ys.iter().filter(|&&y| y == 1).count();
            assert!((400..=600).contains(&ones), "{name}: {ones}");
            assert_eq!(ds, synthetic(name, 1000, 5).unwrap());
        }
        assert_eq!(synthetic("xor-grid", 10, 0).unwrap().n_features(), 16);
        assert_eq!(synthetic("interleaved-clusters", 10, 0).unwrap().n_features(), 2);
        assert!(synthetic("mnist", 10, 0).is_err());
    }
}
