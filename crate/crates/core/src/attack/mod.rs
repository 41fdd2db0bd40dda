//! Exact adversarial examples by enumerating feasible output configurations.
//!
//! An output configuration is feasible when the boxes of its leaves intersect.
//! Every feasible configuration carries a box of inputs that realize it, so
//! the closest input with a flipped prediction is the closest such box among
//! configurations with the other label. All searches here are exhaustive
//! (up to a cap) and therefore only practical for small ensembles.

mod search;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use search::{interval_distance, Complete, Region, Space, Walker};

use crate::error::{Error, Result};
use crate::model::{Ensemble, Interval, LeafBox};
use crate::ocspace::OutputConfig;

/// Default cap on the number of complete configurations a search may visit.
pub const DEFAULT_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleOC {
    pub oc: OutputConfig,
    /// Half-open intersection of the leaf boxes.
    pub bounds: LeafBox,
    pub raw_output: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackKind {
    Closest,
    Budget2x,
    Budget5x,
}

impl AttackKind {
    pub fn budget_multiplier(self) -> f64 {
        match self {
            AttackKind::Closest => 1.0,
            AttackKind::Budget2x => 2.0,
            AttackKind::Budget5x => 5.0,
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::Closest => "closest",
            AttackKind::Budget2x => "x2",
            AttackKind::Budget5x => "x5",
        })
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closest" => Ok(AttackKind::Closest),
            "x2" => Ok(AttackKind::Budget2x),
            "x5" => Ok(AttackKind::Budget5x),
            other => Err(Error::InvalidArgument(format!("unknown attack kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialExample {
    pub original: Vec<f64>,
    pub perturbed: Vec<f64>,
    /// `max_f |perturbed[f] - original[f]|`.
    pub linf: f64,
    /// Number of changed features.
    pub l0: usize,
    pub source_label: u8,
    pub kind: AttackKind,
    /// Output configuration of `perturbed`.
    pub oc: OutputConfig,
    /// Infimum distance from `original` to the configuration's box. `linf`
    /// exceeds it by at most one ulp when the box is open on the near side.
    pub distance: f64,
    /// Predicted probability of class 1 at `perturbed`.
    pub flipped_prob: f64,
}

/// Lazily enumerates feasible output configurations.
pub struct FeasibleIter<'e> {
    ensemble: &'e Ensemble,
    walker: Walker,
    cap: u64,
    emitted: u64,
    failed: bool,
}

impl<'e> Iterator for FeasibleIter<'e> {
    type Item = Result<FeasibleOC>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let complete = self.walker.next_with(|_, _| false)?;
        self.emitted += 1;
        if self.emitted > self.cap {
            self.failed = true;
            return Some(Err(Error::EnumerationCapExceeded(self.cap)));
        }
        Some(Ok(FeasibleOC {
            raw_output: self.ensemble.raw_from_sum(complete.sum),
            oc: OutputConfig::new(complete.oc),
            bounds: LeafBox::new(complete.bounds),
        }))
    }
}

fn region_of(e: &Ensemble, within: Option<&LeafBox>) -> Result<Region> {
    let bounds = match within {
        Some(b) => {
            if b.dim() != e.n_features() {
                return Err(Error::DimensionMismatch {
                    expected: e.n_features(),
                    got: b.dim(),
                });
            }
            b.intervals().to_vec()
        }
        None => vec![Interval::UNBOUNDED; e.n_features()],
    };
    Ok(Region::boxed(bounds))
}

/// Streams every feasible output configuration (optionally only those whose
/// box meets the closed box `within`) exactly once. Yields
/// `EnumerationCapExceeded` and stops once more than `cap` would be emitted.
pub fn enumerate_feasible<'e>(
    e: &'e Ensemble,
    within: Option<&LeafBox>,
    cap: u64,
) -> Result<FeasibleIter<'e>> {
    let region = region_of(e, within)?;
    Ok(FeasibleIter {
        ensemble: e,
        walker: Walker::new(Arc::new(Space::new(e)), region),
        cap,
        emitted: 0,
        failed: false,
    })
}

/// Number of feasible output configurations.
pub fn count_feasible(e: &Ensemble, cap: u64) -> Result<u64> {
    let mut walker = Walker::new(Arc::new(Space::new(e)), region_of(e, None)?);
    let mut count = 0u64;
    while walker.next_with(|_, _| false).is_some() {
        count += 1;
        if count > cap {
            return Err(Error::EnumerationCapExceeded(cap));
        }
    }
    Ok(count)
}

/// Decision threshold on the sum of leaf values: label 1 iff `sum >= threshold`
/// (up to rounding in the link function, which is checked exactly at leaves).
fn sum_threshold(e: &Ensemble) -> f64 {
    match e.aggregation() {
        crate::model::Aggregation::SumLogistic => -e.base_score(),
        crate::model::Aggregation::AverageProb => 0.5 * e.n_trees() as f64,
    }
}

fn check_domain(e: &Ensemble, x: &[f64], domain: &LeafBox) -> Result<()> {
    e.check_input(x)?;
    if domain.dim() != e.n_features() {
        return Err(Error::DimensionMismatch {
            expected: e.n_features(),
            got: domain.dim(),
        });
    }
    if domain.intervals().iter().any(|iv| !(iv.lo <= iv.hi)) {
        return Err(Error::InvalidArgument("empty domain".into()));
    }
    Ok(())
}

/// Branch-and-bound over configurations inside one region, looking for the
/// target label.
struct LabelSearch<'a> {
    e: &'a Ensemble,
    space: Arc<Space>,
    target: u8,
    threshold: f64,
    tol: f64,
    cap: u64,
}

impl<'a> LabelSearch<'a> {
    fn new(e: &'a Ensemble, target: u8, cap: u64) -> LabelSearch<'a> {
        let threshold = sum_threshold(e);
        LabelSearch {
            e,
            space: Arc::new(Space::new(e)),
            target,
            threshold,
            tol: 1e-9 * (1.0 + threshold.abs()),
            cap,
        }
    }

    fn can_reach_target(&self, w: &Walker, p: &search::Partial<'_>) -> bool {
        let maximize = self.target == 1;
        match w.remaining_bound(p.depth, p.bounds, maximize) {
            None => false,
            Some(rest) if maximize => p.sum + rest >= self.threshold - self.tol,
            Some(rest) => p.sum + rest <= self.threshold + self.tol,
        }
    }

    /// Signed objective: larger means more confidently `target`.
    fn objective(&self, sum: f64) -> f64 {
        if self.target == 1 {
            sum
        } else {
            -sum
        }
    }

    /// Any configuration with the target label inside `region`.
    fn find_any(&self, region: Region, nearest_to: Option<&[f64]>) -> Result<Option<Complete>> {
        let mut walker = Walker::new(Arc::clone(&self.space), region);
        if let Some(x) = nearest_to {
            order_by_distance(&mut walker, &self.space, x);
        }
        let mut visited = 0u64;
        while let Some(c) = walker.next_with(|w, p| !self.can_reach_target(w, p)) {
            visited += 1;
            if visited > self.cap {
                return Err(Error::EnumerationCapExceeded(self.cap));
            }
            if self.e.predict_oc(&c.oc).label == self.target {
                return Ok(Some(c));
            }
        }
        Ok(None)
    }

    /// Configuration with the target label maximizing the objective inside
    /// `region`. Ties go to the smaller `distance`, then the lexicographically
    /// smaller configuration.
    fn find_best<D>(&self, region: Region, distance: D) -> Result<Option<Complete>>
    where
        D: Fn(&Complete) -> f64,
    {
        let mut walker = Walker::new(Arc::clone(&self.space), region);
        for depth in 0..self.space.depth() {
            let leaves = &self.space.trees[depth];
            let mut order: Vec<usize> = (0..leaves.len()).collect();
            order.sort_by(|&a, &b| {
                self.objective(leaves[b].value)
                    .total_cmp(&self.objective(leaves[a].value))
            });
            walker.set_leaf_order(depth, order);
        }
        let mut best: Option<(f64, f64, Complete)> = None;
        let mut visited = 0u64;
        loop {
            let incumbent = best.as_ref().map(|(obj, _, _)| *obj);
            let next = walker.next_with(|w, p| {
                if !self.can_reach_target(w, p) {
                    return true;
                }
                match incumbent {
                    None => false,
                    Some(obj) => {
                        let maximize = self.target == 1;
                        match w.remaining_bound(p.depth, p.bounds, maximize) {
                            None => true,
                            Some(rest) => self.objective(p.sum + rest) < obj - self.tol,
                        }
                    }
                }
            });
            let Some(c) = next else { break };
            visited += 1;
            if visited > self.cap {
                return Err(Error::EnumerationCapExceeded(self.cap));
            }
            if self.e.predict_oc(&c.oc).label != self.target {
                continue;
            }
            let obj = self.objective(c.sum);
            let dist = distance(&c);
            let better = match &best {
                None => true,
                Some((bo, bd, bc)) => match obj.total_cmp(bo) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => match dist.total_cmp(bd) {
                        Ordering::Less => true,
                        Ordering::Greater => false,
                        Ordering::Equal => c.oc < bc.oc,
                    },
                },
            };
            if better {
                best = Some((obj, dist, c));
            }
        }
        Ok(best.map(|(_, _, c)| c))
    }
}

/// Tries leaves closest to `x` first.
fn order_by_distance(walker: &mut Walker, space: &Space, x: &[f64]) {
    for depth in 0..space.depth() {
        let leaves = &space.trees[depth];
        let dist: Vec<f64> = leaves
            .iter()
            .map(|leaf| {
                leaf.bounds
                    .iter()
                    .map(|&(f, iv)| interval_distance(x[f], iv.lo, iv.hi))
                    .fold(0.0, f64::max)
            })
            .collect();
        let mut order: Vec<usize> = (0..leaves.len()).collect();
        order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]));
        walker.set_leaf_order(depth, order);
    }
}

/// Infimum L-infinity distance from `x` to a configuration's box clipped to `domain`.
fn box_distance(x: &[f64], bounds: &[Interval], domain: &[Interval]) -> f64 {
    x.iter()
        .zip(bounds)
        .zip(domain)
        .map(|((&v, b), dm)| interval_distance(v, b.lo.max(dm.lo), b.hi.min(dm.hi)))
        .fold(0.0, f64::max)
}

/// Point of the half-open box (clipped to the closed domain) nearest to `x`.
/// Open upper ends are approached by the largest value below them.
fn witness(x: &[f64], bounds: &[Interval], domain: &[Interval]) -> Vec<f64> {
    x.iter()
        .zip(bounds)
        .zip(domain)
        .map(|((&v, b), dm)| {
            let lo = b.lo.max(dm.lo);
            let hi = b.hi.min(dm.hi);
            let mut w = v.max(lo).min(hi);
            if w >= b.hi {
                w = b.hi.next_down();
            }
            w
        })
        .collect()
}

fn finish(
    e: &Ensemble,
    x: &[f64],
    source_label: u8,
    kind: AttackKind,
    found: Complete,
    domain: &[Interval],
) -> Result<AdversarialExample> {
    let distance = box_distance(x, &found.bounds, domain);
    let perturbed = witness(x, &found.bounds, domain);
    let pred = e.evaluate(&perturbed)?;
    debug_assert_eq!(e.leaf_path_unchecked(&perturbed).as_slice(), found.oc.as_slice());
    if pred.label == source_label {
        // Only possible if the witness fell outside its box, which the
        // construction rules out.
        return Err(Error::NoAdversarialExists);
    }
    let linf = x
        .iter()
        .zip(&perturbed)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let l0 = x.iter().zip(&perturbed).filter(|(a, b)| a != b).count();
    Ok(AdversarialExample {
        original: x.to_vec(),
        perturbed,
        linf,
        l0,
        source_label,
        kind,
        oc: OutputConfig::new(found.oc),
        distance,
        flipped_prob: pred.prob,
    })
}

/// Closest input (L-infinity, inside `domain`) whose predicted label differs
/// from the prediction at `x`.
pub fn closest_adversarial(e: &Ensemble, x: &[f64], domain: &LeafBox) -> Result<AdversarialExample> {
    closest_adversarial_capped(e, x, domain, DEFAULT_CAP)
}

pub fn closest_adversarial_capped(
    e: &Ensemble,
    x: &[f64],
    domain: &LeafBox,
    cap: u64,
) -> Result<AdversarialExample> {
    check_domain(e, x, domain)?;
    let source = e.evaluate(x)?.label;
    let search = LabelSearch::new(e, 1 - source, cap);
    let dom = domain.intervals().to_vec();

    // The optimum is attained at one of these radii: distances from x to a
    // threshold or to a domain face, computed with the same expressions the
    // region test uses.
    let mut radii = vec![0.0];
    for tree in e.trees() {
        for node in tree.nodes() {
            if let crate::model::Node::Internal { feature, threshold, .. } = *node {
                radii.push(interval_distance(x[feature], threshold, threshold));
            }
        }
    }
    for (&v, iv) in x.iter().zip(&dom) {
        radii.push(interval_distance(v, iv.lo, iv.lo));
        radii.push(interval_distance(v, iv.hi, iv.hi));
    }
    radii.retain(|r| r.is_finite());
    radii.sort_by(f64::total_cmp);
    radii.dedup();

    let probe = |r: f64| search.find_any(Region::ball(dom.clone(), x, r), Some(x));

    let Some(mut found) = search.find_any(Region::boxed(dom.clone()), Some(x))? else {
        return Err(Error::NoAdversarialExists);
    };
    // Smallest radius admitting a flip; feasibility is monotone in the radius.
    let found_distance = box_distance(x, &found.bounds, &dom);
    let mut lo = 0usize;
    let mut hi = radii
        .partition_point(|&r| r < found_distance)
        .min(radii.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        match probe(radii[mid])? {
            Some(c) => {
                found = c;
                hi = mid;
            }
            None => lo = mid + 1,
        }
    }
    finish(e, x, source, AttackKind::Closest, found, &dom)
}

/// Most confidently misclassified input within L-infinity distance `budget`
/// of `x` (and inside `domain`).
pub fn budgeted_adversarial(
    e: &Ensemble,
    x: &[f64],
    budget: f64,
    domain: &LeafBox,
    kind: AttackKind,
) -> Result<AdversarialExample> {
    budgeted_adversarial_capped(e, x, budget, domain, kind, DEFAULT_CAP)
}

pub fn budgeted_adversarial_capped(
    e: &Ensemble,
    x: &[f64],
    budget: f64,
    domain: &LeafBox,
    kind: AttackKind,
    cap: u64,
) -> Result<AdversarialExample> {
    check_domain(e, x, domain)?;
    if !(budget > 0.0) {
        return Err(Error::InvalidArgument(format!("budget must be positive, got {budget}")));
    }
    let source = e.evaluate(x)?.label;
    let search = LabelSearch::new(e, 1 - source, cap);
    let dom = domain.intervals().to_vec();
    let region = Region::ball(dom.clone(), x, budget);
    let found = search
        .find_best(region, |c| box_distance(x, &c.bounds, &dom))?
        .ok_or(Error::NoAdversarialExists)?;
    finish(e, x, source, kind, found, &dom)
}

/// Median L-infinity size of a set of attacks.
pub fn median_delta(attacks: &[AdversarialExample]) -> Result<f64> {
    if attacks.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut v: Vec<f64> = attacks.iter().map(|a| a.linf).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[cfg(test)]
mod tests;
