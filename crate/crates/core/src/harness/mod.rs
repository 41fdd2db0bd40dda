//! Evaluation protocol: normalization, folds, adversarial sets, detector
//! scoring, ranking metrics and reference-set sweeps.

mod adversarial;
mod data;
mod eval;
mod metrics;
mod pipeline;

pub use adversarial::{adv_vs_random_distributions, build_adv_sets, AdvConfig, AdvSet, AdvSets, PairedDistance};
pub use data::{kfold_split, synthetic, Dataset, FeatureRanges, DEFAULT_SYNTHETIC_ROWS, SYNTHETIC};
pub use eval::{refset_sweep, score_adv_set, EvalRecord, EvalSet, SweepRow, Timings, DEFAULT_FRACTIONS};
pub use metrics::{coverage_detection_curve, roc_auc, trapezoid_auc, CurvePoint};
pub use pipeline::{
    evaluate, write_results, AucRow, CurveRow, DistanceRow, EvalConfig, EvalReport, FoldRow, ModelPreset,
    RefSweepRow, TimingRow, RESULT_FILES,
};

/// Seed for a sub-task, mixed from the root seed and a path of task ids
/// (SplitMix64 finalizer per step).
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    let mut z = root;
    for &p in path {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}
