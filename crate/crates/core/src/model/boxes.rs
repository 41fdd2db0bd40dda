use super::{Node, Tree};

/// One coordinate of a box. Leaf regions read it as `[lo, hi)`; search
/// regions (data domains, perturbation balls) read it as `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Interval {
        Interval { lo, hi }
    }

    #[inline]
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v < self.hi
    }

    #[inline]
    pub fn contains_closed(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Axis-aligned box, one interval per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafBox {
    intervals: Vec<Interval>,
}

impl LeafBox {
    pub fn new(intervals: Vec<Interval>) -> LeafBox {
        LeafBox { intervals }
    }

    pub fn unbounded(n_features: usize) -> LeafBox {
        LeafBox::new(vec![Interval::UNBOUNDED; n_features])
    }

    /// The normalized data domain `[0, 1]^d`.
    pub fn unit(n_features: usize) -> LeafBox {
        LeafBox::new(vec![Interval::new(0.0, 1.0); n_features])
    }

    /// Closed L-infinity ball of the given radius.
    pub fn ball(center: &[f64], radius: f64) -> LeafBox {
        LeafBox::new(
            center
                .iter()
                .map(|&c| Interval::new(c - radius, c + radius))
                .collect(),
        )
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    /// Half-open membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.intervals.iter().zip(x).all(|(i, &v)| i.contains(v))
    }

    /// Closed membership, for search regions.
    pub fn contains_closed(&self, x: &[f64]) -> bool {
        self.intervals
            .iter()
            .zip(x)
            .all(|(i, &v)| i.contains_closed(v))
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.iter().any(|i| !(i.lo < i.hi))
    }

    /// Intersection of two half-open boxes, `None` when empty.
    pub fn intersect(&self, other: &LeafBox) -> Option<LeafBox> {
        let b = LeafBox::new(
            self.intervals
                .iter()
                .zip(&other.intervals)
                .map(|(a, b)| Interval::new(a.lo.max(b.lo), a.hi.min(b.hi)))
                .collect(),
        );
        (!b.is_empty()).then_some(b)
    }

    /// Componentwise intersection with a closed box (clipping a leaf box to a domain).
    pub fn clip(&self, region: &LeafBox) -> LeafBox {
        LeafBox::new(
            self.intervals
                .iter()
                .zip(&region.intervals)
                .map(|(a, b)| Interval::new(a.lo.max(b.lo), a.hi.min(b.hi)))
                .collect(),
        )
    }
}

/// Region of input space reaching each leaf, indexed by leaf id.
///
/// A split `x[f] < t` tightens `hi` on the left branch and `lo` on the right,
/// so the boxes of one tree partition the input space exactly.
pub fn leaf_boxes(tree: &Tree, n_features: usize) -> Vec<LeafBox> {
    let mut out = vec![LeafBox::unbounded(n_features); tree.leaf_count()];
    let mut stack = vec![(0u32, LeafBox::unbounded(n_features))];
    while let Some((index, current)) = stack.pop() {
        match tree.nodes()[index as usize] {
            Node::Leaf { leaf_id, .. } => out[leaf_id as usize] = current,
            Node::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                let mut l = current.clone();
                let mut r = current;
                let li = &mut l.intervals[feature];
                li.hi = li.hi.min(threshold);
                let ri = &mut r.intervals[feature];
                ri.lo = ri.lo.max(threshold);
                stack.push((left, l));
                stack.push((right, r));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NodeSpec;
    use crate::testutil::{random_ensemble, RandomEnsembleConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_leaf_box_is_unbounded() {
        let boxes = leaf_boxes(&Tree::leaf(1.0), 3);
        assert_eq!(boxes, vec![LeafBox::unbounded(3)]);
    }

    #[test]
    fn one_split() {
        let t = Tree::from_spec(&NodeSpec::Split {
            feature: 0,
            threshold: 5.0,
            left: Box::new(NodeSpec::Leaf { value: 0.0 }),
            right: Box::new(NodeSpec::Leaf { value: 1.0 }),
        })
        .unwrap();
        let boxes = leaf_boxes(&t, 2);
        assert_eq!(boxes[0].intervals()[0], Interval::new(f64::NEG_INFINITY, 5.0));
        assert_eq!(boxes[1].intervals()[0], Interval::new(5.0, f64::INFINITY));
        assert_eq!(boxes[0].intervals()[1], Interval::UNBOUNDED);
        assert!(boxes[1].contains(&[5.0, 0.0]));
        assert!(!boxes[0].contains(&[5.0, 0.0]));
    }

    #[test]
    fn random_points_land_in_their_leaf_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let cfg = RandomEnsembleConfig {
                n_trees: 1,
                n_features: 3,
                max_depth: 5,
                ..Default::default()
            };
            let e = random_ensemble(&mut rng, &cfg);
            let tree = &e.trees()[0];
            let boxes = leaf_boxes(tree, 3);
            for b in &boxes {
                assert!(!b.is_empty());
            }
            for _ in 0..1000 {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.2..1.2)).collect();
                let id = tree.leaf_id(&x) as usize;
                let inside: Vec<usize> = (0..boxes.len()).filter(|&i| boxes[i].contains(&x)).collect();
                assert_eq!(inside, vec![id]);
            }
        }
    }

    #[test]
    fn intersect_and_clip() {
        let a = LeafBox::new(vec![Interval::new(0.0, 3.0)]);
        let b = LeafBox::new(vec![Interval::new(3.0, 5.0)]);
        assert!(a.intersect(&b).is_none());
        let c = LeafBox::new(vec![Interval::new(2.0, 5.0)]);
        assert_eq!(a.intersect(&c).unwrap().intervals()[0], Interval::new(2.0, 3.0));
        let ball = LeafBox::ball(&[0.5], 0.25);
        assert!(ball.contains_closed(&[0.75]));
        assert!(!ball.contains(&[0.75]));
        assert_eq!(a.clip(&LeafBox::unit(1)).intervals()[0], Interval::new(0.0, 1.0));
    }
}
