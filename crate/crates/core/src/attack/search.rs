//! Depth-first walk over feasible output configurations.
//!
//! Trees are visited in ascending leaf-count order. Each level fixes one tree's
//! leaf and narrows the running box; a branch is dropped as soon as the box
//! becomes empty or leaves the search region. Search regions are closed boxes,
//! optionally with an L-infinity radius around a center, and are compared
//! against the closure of the (half-open) leaf boxes so that configurations
//! at infimum distance exactly `radius` are still admitted.

use std::sync::Arc;

use crate::model::{leaf_boxes, Ensemble, Interval};

#[derive(Debug, Clone)]
pub(crate) struct LeafGeom {
    pub id: u8,
    pub value: f64,
    /// Constrained features only.
    pub bounds: Vec<(usize, Interval)>,
}

/// Ensemble geometry in search order.
#[derive(Debug, Clone)]
pub(crate) struct Space {
    /// `order[depth]` is the tree index fixed at that depth.
    pub order: Vec<usize>,
    pub trees: Vec<Vec<LeafGeom>>,
    pub n_features: usize,
}

impl Space {
    pub fn new(e: &Ensemble) -> Space {
        let d = e.n_features();
        let mut order: Vec<usize> = (0..e.n_trees()).collect();
        order.sort_by_key(|&m| e.trees()[m].leaf_count());
        let trees = order
            .iter()
            .map(|&m| {
                let tree = &e.trees()[m];
                leaf_boxes(tree, d)
                    .into_iter()
                    .enumerate()
                    .map(|(id, b)| LeafGeom {
                        id: id as u8,
                        value: tree.leaf_value(id as u8),
                        bounds: b
                            .intervals()
                            .iter()
                            .enumerate()
                            .filter(|(_, iv)| **iv != Interval::UNBOUNDED)
                            .map(|(f, iv)| (f, *iv))
                            .collect(),
                    })
                    .collect()
            })
            .collect();
        Space {
            order,
            trees,
            n_features: d,
        }
    }

    pub fn depth(&self) -> usize {
        self.order.len()
    }
}

#[inline]
pub(crate) fn interval_distance(x: f64, lo: f64, hi: f64) -> f64 {
    if x < lo {
        lo - x
    } else if x > hi {
        x - hi
    } else {
        0.0
    }
}

/// Closed search region.
#[derive(Debug, Clone)]
pub(crate) struct Region {
    pub bounds: Vec<Interval>,
    pub center: Option<Vec<f64>>,
    pub radius: f64,
}

impl Region {
    pub fn boxed(bounds: Vec<Interval>) -> Region {
        Region {
            bounds,
            center: None,
            radius: f64::INFINITY,
        }
    }

    pub fn ball(bounds: Vec<Interval>, center: &[f64], radius: f64) -> Region {
        Region {
            bounds,
            center: Some(center.to_vec()),
            radius,
        }
    }

    /// Whether a half-open interval `[lo, hi)` on feature `f` can meet the region.
    #[inline]
    pub fn admits(&self, f: usize, lo: f64, hi: f64) -> bool {
        if !(lo < hi) {
            return false;
        }
        let r = self.bounds[f];
        let l = lo.max(r.lo);
        let u = hi.min(r.hi);
        if l > u {
            return false;
        }
        match &self.center {
            Some(c) => interval_distance(c[f], l, u) <= self.radius,
            None => true,
        }
    }
}

/// A complete configuration produced by the walk.
#[derive(Debug, Clone)]
pub(crate) struct Complete {
    /// Leaf ids in tree order.
    pub oc: Vec<u8>,
    /// Half-open intersection of the leaf boxes.
    pub bounds: Vec<Interval>,
    pub sum: f64,
}

/// State of a partially fixed configuration, handed to pruning callbacks.
pub(crate) struct Partial<'a> {
    /// Number of trees fixed so far (in search order).
    pub depth: usize,
    pub bounds: &'a [Interval],
    pub sum: f64,
}

pub(crate) struct Walker {
    space: Arc<Space>,
    pub region: Region,
    /// Per depth, the order in which leaves are tried.
    leaf_order: Vec<Vec<usize>>,
    next: Vec<usize>,
    boxes: Vec<Interval>,
    sums: Vec<f64>,
    chosen: Vec<usize>,
    done: bool,
}

impl Walker {
    pub fn new(space: Arc<Space>, region: Region) -> Walker {
        let d = space.n_features;
        let leaf_order = space
            .trees
            .iter()
            .map(|leaves| (0..leaves.len()).collect())
            .collect();
        let done = !(0..d).all(|f| region.admits(f, f64::NEG_INFINITY, f64::INFINITY));
        let mut boxes = Vec::with_capacity((space.depth() + 1) * d);
        boxes.extend(std::iter::repeat_n(Interval::UNBOUNDED, d));
        let chosen = Vec::with_capacity(space.depth());
        Walker {
            space,
            region,
            leaf_order,
            next: vec![0],
            boxes,
            sums: vec![0.0],
            chosen,
            done,
        }
    }

    /// Replaces the order in which leaves of the tree at `depth` are tried.
    pub fn set_leaf_order(&mut self, depth: usize, order: Vec<usize>) {
        debug_assert_eq!(order.len(), self.space.trees[depth].len());
        self.leaf_order[depth] = order;
    }

    /// Sum over unfixed trees of the largest (or smallest) value among leaves
    /// that can still meet `bounds` inside the region. `None` if some tree has
    /// no such leaf.
    pub fn remaining_bound(&self, depth: usize, bounds: &[Interval], maximize: bool) -> Option<f64> {
        let mut total = 0.0;
        for leaves in &self.space.trees[depth..] {
            let mut best: Option<f64> = None;
            for leaf in leaves {
                if self.compatible(leaf, bounds) {
                    best = Some(match best {
                        None => leaf.value,
                        Some(b) if maximize => b.max(leaf.value),
                        Some(b) => b.min(leaf.value),
                    });
                }
            }
            total += best?;
        }
        Some(total)
    }

    #[inline]
    fn compatible(&self, leaf: &LeafGeom, bounds: &[Interval]) -> bool {
        leaf.bounds.iter().all(|&(f, iv)| {
            let lo = bounds[f].lo.max(iv.lo);
            let hi = bounds[f].hi.min(iv.hi);
            self.region.admits(f, lo, hi)
        })
    }

    /// Advances to the next complete configuration whose prefixes all survive
    /// `prune` (return `true` to drop a branch).
    pub fn next_with<P>(&mut self, mut prune: P) -> Option<Complete>
    where
        P: FnMut(&Walker, &Partial<'_>) -> bool,
    {
        let space = Arc::clone(&self.space);
        let d = space.n_features;
        let depth_total = space.depth();
        while !self.done {
            let depth = self.next.len() - 1;
            let leaves = &space.trees[depth];
            if self.next[depth] >= leaves.len() {
                self.next.pop();
                self.sums.pop();
                self.boxes.truncate(self.boxes.len() - d);
                if self.next.is_empty() {
                    self.done = true;
                    return None;
                }
                self.chosen.pop();
                continue;
            }
            let leaf_index = self.leaf_order[depth][self.next[depth]];
            self.next[depth] += 1;
            let leaf = &leaves[leaf_index];

            // Narrow the parent box by the leaf's constraints.
            let parent = depth * d;
            let mut child: Vec<Interval> = self.boxes[parent..parent + d].to_vec();
            let mut ok = true;
            for &(f, iv) in &leaf.bounds {
                let lo = child[f].lo.max(iv.lo);
                let hi = child[f].hi.min(iv.hi);
                if !self.region.admits(f, lo, hi) {
                    ok = false;
                    break;
                }
                child[f] = Interval::new(lo, hi);
            }
            if !ok {
                continue;
            }
            let sum = self.sums[depth] + leaf.value;
            let partial = Partial {
                depth: depth + 1,
                bounds: &child,
                sum,
            };
            if prune(self, &partial) {
                continue;
            }
            if depth + 1 == depth_total {
                let mut oc = vec![0u8; depth_total];
                for (k, &li) in self.chosen.iter().enumerate() {
                    oc[space.order[k]] = space.trees[k][li].id;
                }
                oc[space.order[depth]] = leaf.id;
                return Some(Complete {
                    oc,
                    bounds: child,
                    sum,
                });
            }
            self.chosen.push(leaf_index);
            self.boxes.extend_from_slice(&child);
            self.sums.push(sum);
            self.next.push(0);
        }
        None
    }
}
