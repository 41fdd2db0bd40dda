//! Additive tree ensembles: representation, model-file parsing and inference.
//!
//! Every tree is stored as a flat node array with the root at index 0. Leaves
//! carry a byte identifier assigned in depth-first order (left subtree first),
//! which is the coordinate value an example takes in output-configuration
//! space. Routing is `x[feature] < threshold` goes left, everything else
//! (including equality) goes right, so the region reaching a leaf is a
//! product of half-open intervals `[lo, hi)`.

mod boxes;
mod json;

pub use boxes::{leaf_boxes, Interval, LeafBox};
pub use json::{parse_model, NodeSpec, ModelSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ocspace::OutputConfig;

/// Two trees sharing feature 0: leaf 0 of tree 0 needs `x0 < 3`, leaves 2
/// and 3 of tree 1 need `x0 >= 4`, so output configurations `(0, 2)` and
/// `(0, 3)` are unreachable.
pub const SHARED_SPLITS_JSON: &str = include_str!("../../data/shared_splits.json");

/// Maximum number of leaves per tree (one byte per leaf identifier).
pub const MAX_LEAVES: usize = 256;
/// Maximum number of trees (per-lane byte accumulator in the scan kernel).
pub const MAX_TREES: usize = 255;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Internal {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
        leaf_id: u8,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    /// Leaf value indexed by leaf id.
    leaf_values: Vec<f64>,
}

impl Tree {
    /// A tree consisting of a single leaf.
    pub fn leaf(value: f64) -> Tree {
        Tree {
            nodes: vec![Node::Leaf { value, leaf_id: 0 }],
            leaf_values: vec![value],
        }
    }

    /// Flattens a nested tree description, numbering leaves depth-first.
    pub fn from_spec(spec: &NodeSpec) -> Result<Tree> {
        let mut tree = Tree {
            nodes: Vec::new(),
            leaf_values: Vec::new(),
        };
        tree.push(spec)?;
        Ok(tree)
    }

    fn push(&mut self, spec: &NodeSpec) -> Result<u32> {
        let index = self.nodes.len() as u32;
        match spec {
            NodeSpec::Leaf { value } => {
                if !value.is_finite() {
                    return Err(Error::MalformedModel(format!(
                        "non-finite leaf value {value}"
                    )));
                }
                if self.leaf_values.len() == MAX_LEAVES {
                    return Err(Error::LimitExceeded(format!(
                        "tree has more than {MAX_LEAVES} leaves"
                    )));
                }
                let leaf_id = self.leaf_values.len() as u8;
                self.leaf_values.push(*value);
                self.nodes.push(Node::Leaf {
                    value: *value,
                    leaf_id,
                });
            }
            NodeSpec::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if !threshold.is_finite() {
                    return Err(Error::MalformedModel(format!(
                        "non-finite threshold {threshold}"
                    )));
                }
                // Placeholder, children are patched in once their indices are known.
                self.nodes.push(Node::Leaf {
                    value: 0.0,
                    leaf_id: 0,
                });
                let l = self.push(left)?;
                let r = self.push(right)?;
                self.nodes[index as usize] = Node::Internal {
                    feature: *feature,
                    threshold: *threshold,
                    left: l,
                    right: r,
                };
            }
        }
        Ok(index)
    }

    pub fn to_spec(&self) -> NodeSpec {
        self.spec_at(0)
    }

    fn spec_at(&self, index: u32) -> NodeSpec {
        match self.nodes[index as usize] {
            Node::Leaf { value, .. } => NodeSpec::Leaf { value },
            Node::Internal {
                feature,
                threshold,
                left,
                right,
            } => NodeSpec::Split {
                feature,
                threshold,
                left: Box::new(self.spec_at(left)),
                right: Box::new(self.spec_at(right)),
            },
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_values.len()
    }

    pub fn leaf_values(&self) -> &[f64] {
        &self.leaf_values
    }

    pub fn leaf_value(&self, leaf_id: u8) -> f64 {
        self.leaf_values[leaf_id as usize]
    }

    /// Largest feature index used by a split, if any.
    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Internal { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    /// Leaf id reached by `x`. Assumes `x` has been validated.
    #[inline]
    pub fn leaf_id(&self, x: &[f64]) -> u8 {
        let mut index = 0usize;
        loop {
            match self.nodes[index] {
                Node::Leaf { leaf_id, .. } => return leaf_id,
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    index = if x[feature] < threshold { left } else { right } as usize;
                }
            }
        }
    }

    /// Depth of the deepest leaf (a single leaf has depth 0).
    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], index: usize) -> usize {
            match nodes[index] {
                Node::Leaf { .. } => 0,
                Node::Internal { left, right, .. } => {
                    1 + go(nodes, left as usize).max(go(nodes, right as usize))
                }
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Boosting: `raw = base_score + sum of leaf values`, `prob = logistic(raw)`.
    SumLogistic,
    /// Forests: `raw = prob = mean of leaf values`. The base score is ignored.
    AverageProb,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub raw: f64,
    pub prob: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    trees: Vec<Tree>,
    base_score: f64,
    aggregation: Aggregation,
    n_features: usize,
}

impl Ensemble {
    pub fn new(
        trees: Vec<Tree>,
        base_score: f64,
        aggregation: Aggregation,
        n_features: usize,
    ) -> Result<Ensemble> {
        if trees.is_empty() {
            return Err(Error::MalformedModel("ensemble has no trees".into()));
        }
        if trees.len() > MAX_TREES {
            return Err(Error::LimitExceeded(format!(
                "{} trees, at most {MAX_TREES} are supported",
                trees.len()
            )));
        }
        if !base_score.is_finite() {
            return Err(Error::MalformedModel("non-finite base_score".into()));
        }
        for tree in &trees {
            if let Some(feature) = tree.max_feature() {
                if feature >= n_features {
                    return Err(Error::FeatureIndexOutOfRange {
                        feature,
                        n_features,
                    });
                }
            }
            if aggregation == Aggregation::AverageProb
                && tree.leaf_values.iter().any(|v| !(0.0..=1.0).contains(v))
            {
                return Err(Error::MalformedModel(
                    "average_prob leaves must hold values in [0, 1]".into(),
                ));
            }
        }
        Ok(Ensemble {
            trees,
            base_score,
            aggregation,
            n_features,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn aggregation(&self) -> Aggregation {
        self.aggregation
    }

    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        if let Some(f) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(f));
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Prediction> {
        self.check_input(x)?;
        let sum: f64 = self
            .trees
            .iter()
            .map(|t| t.leaf_value(t.leaf_id(x)))
            .sum();
        Ok(self.predict_from_sum(sum))
    }

    pub fn leaf_path(&self, x: &[f64]) -> Result<OutputConfig> {
        self.check_input(x)?;
        Ok(self.leaf_path_unchecked(x))
    }

    pub(crate) fn leaf_path_unchecked(&self, x: &[f64]) -> OutputConfig {
        OutputConfig::new(self.trees.iter().map(|t| t.leaf_id(x)).collect())
    }

    /// Prediction implied by an output configuration, without routing an input.
    pub fn predict_oc(&self, oc: &[u8]) -> Prediction {
        debug_assert_eq!(oc.len(), self.trees.len());
        let sum: f64 = self
            .trees
            .iter()
            .zip(oc)
            .map(|(t, &id)| t.leaf_value(id))
            .sum();
        self.predict_from_sum(sum)
    }

    /// Maps a sum of leaf values to the ensemble's raw output.
    pub fn raw_from_sum(&self, sum: f64) -> f64 {
        match self.aggregation {
            Aggregation::SumLogistic => self.base_score + sum,
            Aggregation::AverageProb => sum / self.trees.len() as f64,
        }
    }

    pub fn prob_from_raw(&self, raw: f64) -> f64 {
        match self.aggregation {
            Aggregation::SumLogistic => logistic(raw),
            Aggregation::AverageProb => raw,
        }
    }

    fn predict_from_sum(&self, sum: f64) -> Prediction {
        let raw = self.raw_from_sum(sum);
        let prob = self.prob_from_raw(raw);
        Prediction {
            raw,
            prob,
            label: label_of(prob),
        }
    }

    pub fn to_spec(&self) -> ModelSpec {
        ModelSpec {
            aggregation: self.aggregation,
            base_score: self.base_score,
            n_features: self.n_features,
            trees: self.trees.iter().map(Tree::to_spec).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("model serializes")
    }
}

pub fn logistic(raw: f64) -> f64 {
    1.0 / (1.0 + (-raw).exp())
}

#[inline]
pub fn label_of(prob: f64) -> u8 {
    u8::from(prob >= 0.5)
}
