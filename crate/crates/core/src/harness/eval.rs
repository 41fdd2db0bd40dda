//! Detector scoring over mixed normal/adversarial sets and reference sweeps.

use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adversarial::AdvSet;
use super::data::Dataset;
use super::metrics::roc_auc;
use crate::attack::AttackKind;
use crate::detectors::{DetectorId, Detectors};
use crate::error::{Error, Result};
use crate::model::Ensemble;
use crate::ocspace::{oc_score_with, Kernel, OutputConfig, ReferenceSet};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub x: Vec<f64>,
    /// One score per detector of the owning set, in the same order.
    pub scores: Vec<f64>,
    pub is_adv: bool,
    pub predicted_label: u8,
    /// Whether the prediction matches the true label. Always false for
    /// adversarial records.
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub kind: AttackKind,
    pub detectors: Vec<DetectorId>,
    pub records: Vec<EvalRecord>,
    pub n_normal: usize,
    pub n_adv: usize,
    pub n_dropped: usize,
}

impl EvalSet {
    pub fn scores(&self, id: DetectorId) -> Result<Vec<(f64, bool)>> {
        let j = self
            .detectors
            .iter()
            .position(|&d| d == id)
            .ok_or_else(|| Error::InvalidArgument(format!("detector {id} was not scored")))?;
        Ok(self.records.iter().map(|r| (r.scores[j], r.is_adv)).collect())
    }

    pub fn auc(&self, id: DetectorId) -> Result<f64> {
        roc_auc(&self.scores(id)?)
    }
}

/// Per-example scoring times in milliseconds, one list per detector.
pub type Timings = Vec<Vec<f64>>;

/// Scores the normal rows and attacks of `set` with every detector in `ids`.
pub fn score_adv_set(dets: &Detectors<'_>, ids: &[DetectorId], set: &AdvSet, test: &Dataset) -> Result<(EvalSet, Timings)> {
    let mut inputs: Vec<(&[f64], bool, u8)> = set
        .normals
        .iter()
        .map(|&i| (test.xs[i].as_slice(), false, test.ys[i]))
        .collect();
    inputs.extend(set.attacks.iter().map(|a| (a.perturbed.as_slice(), true, a.source_label)));
    let scored: Vec<(EvalRecord, Vec<f64>)> = inputs
        .par_iter()
        .enumerate()
        .map(|(i, &(x, is_adv, true_label))| {
            let predicted_label = dets.ensemble.evaluate(x).map_err(|e| Error::at(i, e))?.label;
            let mut scores = Vec::with_capacity(ids.len());
            let mut ms = Vec::with_capacity(ids.len());
            for &id in ids {
                let start = Instant::now();
                let s = dets.score(id, x).map_err(|e| Error::at(i, e))?;
                ms.push(start.elapsed().as_secs_f64() * 1e3);
                scores.push(s.score);
            }
            let record = EvalRecord {
                x: x.to_vec(),
                scores,
                is_adv,
                predicted_label,
                correct: !is_adv && predicted_label == true_label,
            };
            Ok((record, ms))
        })
        .collect::<Result<_>>()?;
    let mut timings = vec![Vec::with_capacity(scored.len()); ids.len()];
    let mut records = Vec::with_capacity(scored.len());
    for (r, ms) in scored {
        for (t, v) in timings.iter_mut().zip(ms) {
            t.push(v);
        }
        records.push(r);
    }
    Ok((
        EvalSet {
            kind: set.kind,
            detectors: ids.to_vec(),
            records,
            n_normal: set.normals.len(),
            n_adv: set.attacks.len(),
            n_dropped: set.dropped,
        },
        timings,
    ))
}

pub const DEFAULT_FRACTIONS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Minimum wall time spent timing each fraction.
const SWEEP_MIN_SECS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub fraction: f64,
    pub auc: f64,
    /// Mean OC-score scan time per query.
    pub mean_ms: f64,
}

/// OC-score AUC and per-query scan time with a random `fraction` of each
/// class's reference rows.
pub fn refset_sweep(
    e: &Ensemble,
    full: &ReferenceSet,
    set: &EvalSet,
    fractions: &[f64],
    seed: u64,
    kernel: Kernel,
) -> Result<Vec<SweepRow>> {
    full.check_compatible(e)?;
    let queries: Vec<(OutputConfig, u8, bool)> = set
        .records
        .iter()
        .map(|r| Ok((e.leaf_path(&r.x)?, r.predicted_label, r.is_adv)))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fractions
        .iter()
        .map(|&fraction| {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::InvalidArgument(format!("fraction {fraction} not in (0, 1]")));
            }
            let mut keep = [Vec::new(), Vec::new()];
            for (label, k) in keep.iter_mut().enumerate() {
                let n = full.partitions()[label].logical_rows();
                let m = ((fraction * n as f64).ceil() as usize).clamp(n.min(1), n);
                let mut idx = sample(&mut rng, n, m).into_vec();
                idx.sort_unstable();
                *k = idx;
            }
            let r = full.subset(&keep[0], &keep[1])?;
            let scan = || -> Result<Vec<(f64, bool)>> {
                queries
                    .iter()
                    .map(|(oc, label, is_adv)| Ok((oc_score_with(&r, oc, *label, kernel)? as f64, *is_adv)))
                    .collect()
            };
            let scores = scan()?;
            let start = Instant::now();
            let mut reps = 0usize;
            while reps == 0 || start.elapsed().as_secs_f64() < SWEEP_MIN_SECS {
                std::hint::black_box(scan()?);
                reps += 1;
            }
            let mean_ms = start.elapsed().as_secs_f64() * 1e3 / (reps * queries.len().max(1)) as f64;
            Ok(SweepRow {
                fraction,
                auc: roc_auc(&scores)?,
                mean_ms,
            })
        })
        .collect()
}
