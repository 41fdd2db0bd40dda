use serde::{Deserialize, Serialize};

use super::{Aggregation, Ensemble, Tree};
use crate::error::{Error, Result};

/// Model file layout.
///
/// ```json
/// {"aggregation": "sum_logistic", "base_score": 0.0, "n_features": 2,
///  "trees": [{"feature": 0, "threshold": 0.5, "left": {"value": -1.0}, "right": {"value": 1.0}}]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub aggregation: Aggregation,
    #[serde(default)]
    pub base_score: f64,
    pub n_features: usize,
    pub trees: Vec<NodeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum NodeSpec {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<NodeSpec>,
        right: Box<NodeSpec>,
    },
    Leaf {
        value: f64,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<Ensemble> {
        let trees = self
            .trees
            .iter()
            .map(Tree::from_spec)
            .collect::<Result<Vec<_>>>()?;
        Ensemble::new(trees, self.base_score, self.aggregation, self.n_features)
    }
}

/// Deepest JSON nesting accepted. A 256-leaf comb tree nests 256 levels deep.
const MAX_NESTING: usize = 600;

/// Parses a model file.
pub fn parse_model(bytes: &[u8]) -> Result<Ensemble> {
    let depth = nesting_depth(bytes);
    if depth > MAX_NESTING {
        return Err(Error::LimitExceeded(format!(
            "model JSON nests {depth} levels deep"
        )));
    }
    let mut de = serde_json::Deserializer::from_slice(bytes);
    de.disable_recursion_limit();
    let spec = ModelSpec::deserialize(&mut de)
        .and_then(|spec| de.end().map(|_| spec))
        .map_err(|e| Error::MalformedModel(e.to_string()))?;
    spec.build()
}

fn nesting_depth(bytes: &[u8]) -> usize {
    let (mut depth, mut max) = (0usize, 0usize);
    let (mut in_string, mut escaped) = (false, false);
    for &b in bytes {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' | b'[' => {
                depth += 1;
                max = max.max(depth);
            }
            b'}' | b']' => depth = depth.saturating_sub(1),
            _ => {}
        }
    }
    max
}
