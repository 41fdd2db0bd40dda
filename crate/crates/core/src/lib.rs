//! Adversarial example detection for additive tree ensembles in
//! output-configuration space.
//!
//! An example is encoded as the leaf it reaches in each tree. Its OC-score is
//! the Hamming distance from that encoding to the closest encoding of a
//! correctly classified training example with the same predicted label;
//! adversarial examples tend to land in unusual leaf combinations and score
//! high.

// `!(a < b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod detectors;
pub mod error;
pub mod harness;
pub mod model;
pub mod ocspace;
pub mod testutil;
pub mod trainer;

pub use detectors::{DetectorId, DetectorScore, Detectors, IsolationForest};
pub use error::{Error, Result};
pub use model::{parse_model, Aggregation, Ensemble, LeafBox, Prediction, Tree};
pub use trainer::{train, TrainConfig, TrainMode};
pub use ocspace::{
    batch_oc_scores, build_reference, hamming, oc_score, oc_score_simd, oc_score_with, Kernel, OutputConfig,
    ReferenceSet,
};
