//! Ranking metrics over `(score, is_adversarial)` pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    /// Fraction of normal examples not flagged (`score <= threshold`).
    pub coverage: f64,
    /// Fraction of adversarial examples flagged (`score > threshold`).
    pub detection_rate: f64,
}

fn split(scores: &[(f64, bool)]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut adv = Vec::new();
    let mut normal = Vec::new();
    for &(s, is_adv) in scores {
        if s.is_nan() {
            return Err(Error::InvalidArgument("NaN score".into()));
        }
        if is_adv {
            adv.push(s);
        } else {
            normal.push(s);
        }
    }
    if adv.is_empty() || normal.is_empty() {
        return Err(Error::SingleClass);
    }
    adv.sort_by(f64::total_cmp);
    normal.sort_by(f64::total_cmp);
    Ok((adv, normal))
}

/// Probability that an adversarial score exceeds a normal one, ties counting
/// one half (the normalized Mann-Whitney U statistic).
pub fn roc_auc(scores: &[(f64, bool)]) -> Result<f64> {
    let (adv, normal) = split(scores)?;
    // Twice U, kept integral so the result is exact.
    let mut twice_u: u128 = 0;
    for &a in &adv {
        let below = normal.partition_point(|&n| n < a);
        let not_above = normal.partition_point(|&n| n <= a);
        twice_u += (2 * below + (not_above - below)) as u128;
    }
    Ok(twice_u as f64 / (2 * adv.len() as u128 * normal.len() as u128) as f64)
}

/// Coverage and detection rate at every distinct score, plus a leading point
/// at `-inf` where everything is flagged. Ordered by increasing threshold.
pub fn coverage_detection_curve(scores: &[(f64, bool)]) -> Result<Vec<CurvePoint>> {
    let (adv, normal) = split(scores)?;
    let mut thresholds: Vec<f64> = adv.iter().chain(&normal).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let point = |t: f64| CurvePoint {
        threshold: t,
        coverage: normal.partition_point(|&n| n <= t) as f64 / normal.len() as f64,
        detection_rate: (adv.len() - adv.partition_point(|&a| a <= t)) as f64 / adv.len() as f64,
    };
    Ok(std::iter::once(f64::NEG_INFINITY)
        .chain(thresholds)
        .map(point)
        .collect())
}

/// Area under detection rate as a function of coverage.
pub fn trapezoid_auc(curve: &[CurvePoint]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].coverage - w[0].coverage) * (w[0].detection_rate + w[1].detection_rate) / 2.0)
        .sum()
}
