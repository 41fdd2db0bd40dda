//! Dense-grid brute force for small ensembles whose thresholds sit on the
//! half-grid `(k + 0.5) / STEPS`.
//!
//! A grid of step `1 / STEPS` over `[0, 1]^d` is far too large to walk
//! directly for d = 3, but predictions are constant between consecutive
//! thresholds of each feature. Each axis is therefore compressed to one grid
//! point per threshold cell without changing the answer: for leaf paths any
//! grid point of the cell will do, and for L-infinity distances the grid
//! point of the cell nearest to `x_f` is optimal coordinate-wise.

#![allow(dead_code)]

use std::collections::BTreeSet;

use ocshield_core::model::Node;
use ocshield_core::Ensemble;

pub const STEPS: u32 = 1000;

fn grid(i: u32) -> f64 {
    i as f64 / STEPS as f64
}

fn thresholds(e: &Ensemble, f: usize) -> Vec<f64> {
    let mut t: Vec<f64> = e
        .trees()
        .iter()
        .flat_map(|tree| tree.nodes().iter())
        .filter_map(|n| match *n {
            Node::Internal { feature, threshold, .. } if feature == f => Some(threshold),
            _ => None,
        })
        .collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

/// Grid points of feature `f` split into threshold cells.
fn cells(e: &Ensemble, f: usize) -> Vec<Vec<f64>> {
    let t = thresholds(e, f);
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); t.len() + 1];
    for i in 0..=STEPS {
        let g = grid(i);
        out[t.partition_point(|&th| th <= g)].push(g);
    }
    out.retain(|c| !c.is_empty());
    out
}

fn product(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    points
}

/// Distinct leaf paths over the grid.
pub fn grid_leaf_paths(e: &Ensemble) -> BTreeSet<Vec<u8>> {
    let axes: Vec<Vec<f64>> = (0..e.n_features()).map(|f| cells(e, f).into_iter().map(|c| c[0]).collect()).collect();
    product(&axes)
        .iter()
        .map(|p| e.leaf_path(p).unwrap().into_inner())
        .collect()
}

/// Smallest L-infinity distance from `x` to a grid point with a different
/// predicted label, or `None` if the label is constant on the grid.
pub fn grid_closest_linf(e: &Ensemble, x: &[f64]) -> Option<f64> {
    let source = e.evaluate(x).unwrap().label;
    let axes: Vec<Vec<f64>> = (0..e.n_features())
        .map(|f| {
            cells(e, f)
                .into_iter()
                .map(|c| {
                    *c.iter()
                        .min_by(|a, b| (*a - x[f]).abs().total_cmp(&(*b - x[f]).abs()))
                        .unwrap()
                })
                .collect()
        })
        .collect();
    product(&axes)
        .iter()
        .filter(|p| e.evaluate(p).unwrap().label != source)
        .map(|p| p.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .min_by(f64::total_cmp)
}
