//! Adversarial sets at three perturbation budgets, mixed with normal examples.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::data::Dataset;
use super::derive_seed;
use crate::attack::{
    budgeted_adversarial_capped, closest_adversarial_capped, median_delta, AdversarialExample, AttackKind,
    DEFAULT_CAP,
};
use crate::error::{Error, Result};
use crate::model::{Ensemble, LeafBox};
use crate::ocspace::hamming;

#[derive(Debug, Clone)]
pub struct AdvConfig {
    pub n_attacks: usize,
    /// Normal examples per adversarial example.
    pub normal_ratio: usize,
    pub seed: u64,
    /// Search cap per attack; attacks hitting it are dropped.
    pub cap: u64,
}

impl Default for AdvConfig {
    fn default() -> Self {
        AdvConfig {
            n_attacks: 100,
            normal_ratio: 5,
            seed: 0,
            cap: DEFAULT_CAP,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdvSet {
    pub kind: AttackKind,
    pub attacks: Vec<AdversarialExample>,
    /// Rows of the test set used as normal examples.
    pub normals: Vec<usize>,
    /// Attacks that found no adversarial example within budget or cap.
    pub dropped: usize,
}

#[derive(Debug, Clone)]
pub struct AdvSets {
    /// Closest, then twice and five times the median closest distance.
    pub sets: Vec<AdvSet>,
    pub delta_med: f64,
}

impl AdvSets {
    pub fn get(&self, kind: AttackKind) -> &AdvSet {
        self.sets.iter().find(|s| s.kind == kind).expect("all kinds are built")
    }
}

fn keep_found(results: Vec<Result<AdversarialExample>>) -> Result<(Vec<AdversarialExample>, usize)> {
    let mut found = Vec::with_capacity(results.len());
    let mut dropped = 0;
    for r in results {
        match r {
            Ok(a) => found.push(a),
            Err(Error::NoAdversarialExists | Error::EnumerationCapExceeded(_)) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((found, dropped))
}

/// Attacks `n_attacks` correctly classified test rows (inputs assumed in
/// `[0, 1]`), then mixes each attack set with randomly drawn test rows.
pub fn build_adv_sets(e: &Ensemble, test: &Dataset, cfg: &AdvConfig) -> Result<AdvSets> {
    let correct: Vec<usize> = (0..test.len())
        .map(|i| e.evaluate(&test.xs[i]).map(|p| p.label == test.ys[i]).map_err(|err| Error::at(i, err)))
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .enumerate()
        .filter_map(|(i, ok)| ok.then_some(i))
        .collect();
    if correct.len() < cfg.n_attacks || cfg.n_attacks == 0 {
        return Err(Error::InsufficientCorrect {
            available: correct.len(),
            requested: cfg.n_attacks,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0]));
    let mut chosen: Vec<usize> = sample(&mut rng, correct.len(), cfg.n_attacks)
        .into_iter()
        .map(|k| correct[k])
        .collect();
    chosen.sort_unstable();

    let domain = LeafBox::unit(e.n_features());
    let closest = chosen
        .par_iter()
        .map(|&i| closest_adversarial_capped(e, &test.xs[i], &domain, cfg.cap))
        .collect();
    let (closest, dropped) = keep_found(closest)?;
    let delta_med = median_delta(&closest)?;

    let mut sets = vec![AdvSet {
        kind: AttackKind::Closest,
        attacks: closest,
        normals: Vec::new(),
        dropped,
    }];
    for kind in [AttackKind::Budget2x, AttackKind::Budget5x] {
        let budget = delta_med * kind.budget_multiplier();
        let results = chosen
            .par_iter()
            .map(|&i| budgeted_adversarial_capped(e, &test.xs[i], budget, &domain, kind, cfg.cap))
            .collect();
        let (attacks, dropped) = keep_found(results)?;
        sets.push(AdvSet {
            kind,
            attacks,
            normals: Vec::new(),
            dropped,
        });
    }
    for (k, set) in sets.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1, k as u64]));
        let n = (cfg.normal_ratio * set.attacks.len()).min(test.len());
        let mut normals = sample(&mut rng, test.len(), n).into_vec();
        normals.sort_unstable();
        set.normals = normals;
    }
    Ok(AdvSets { sets, delta_med })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedDistance {
    /// Normalized Hamming distance between the OCs of original and attack.
    pub adversarial: f64,
    /// Same for a random perturbation with matching L-infinity size and support.
    pub random: f64,
}

/// For each attack, a random perturbation of the original with the same
/// L-infinity size and the same number of changed features, clamped to
/// `domain`. It is drawn uniformly from the L-infinity sphere over a random
/// support. Returns both OC-space distances divided by the
/// number of trees.
pub fn adv_vs_random_distributions(
    e: &Ensemble,
    attacks: &[AdversarialExample],
    domain: &LeafBox,
    seed: u64,
) -> Result<Vec<PairedDistance>> {
    let m = e.n_trees() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    attacks
        .iter()
        .map(|a| {
            let base = e.leaf_path(&a.original)?;
            let adv = e.leaf_path(&a.perturbed)?;
            let mut features: Vec<usize> = (0..a.original.len()).collect();
            features.shuffle(&mut rng);
            // uniform on the L-infinity sphere restricted to the chosen support:
            // one face coordinate at plus or minus linf, the rest uniform inside
            let support = &features[..a.l0];
            let mut noisy = a.original.clone();
            for (i, &f) in support.iter().enumerate() {
                let delta = if i == 0 {
                    if rng.gen_bool(0.5) {
                        a.linf
                    } else {
                        -a.linf
                    }
                } else {
                    rng.gen_range(-a.linf..=a.linf)
                };
                let iv = domain.intervals()[f];
                noisy[f] = (noisy[f] + delta).clamp(iv.lo, iv.hi);
            }
            let random = e.leaf_path(&noisy)?;
            Ok(PairedDistance {
                adversarial: hamming(&base, &adv)? as f64 / m,
                random: hamming(&base, &random)? as f64 / m,
            })
        })
        .collect()
}
