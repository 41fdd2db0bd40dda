//! End-to-end evaluation over datasets, models and folds.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::adversarial::{adv_vs_random_distributions, build_adv_sets, AdvConfig};
use super::data::{kfold_split, Dataset, FeatureRanges};
use super::derive_seed;
use super::eval::{refset_sweep, score_adv_set, EvalSet, SweepRow, DEFAULT_FRACTIONS};
use super::metrics::coverage_detection_curve;
use crate::attack::{AttackKind, DEFAULT_CAP};
use crate::detectors::{fit_iforest, DetectorId, Detectors, DEFAULT_SUBSAMPLE, DEFAULT_TREES};
use crate::error::{Error, Result};
use crate::model::LeafBox;
use crate::ocspace::{build_reference, Kernel};
use crate::trainer::{train, TrainConfig, TrainMode};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelPreset {
    pub name: String,
    pub config: TrainConfig,
}

impl ModelPreset {
    /// Boosted ensemble: 50 trees of depth 3.
    pub fn boost() -> ModelPreset {
        ModelPreset {
            name: "boost".into(),
            config: TrainConfig {
                n_trees: 50,
                max_depth: 3,
                learning_rate: 0.3,
                mode: TrainMode::Boosting,
                seed: 0,
                min_samples_leaf: 20,
                min_split_gain: 0.0,
            },
        }
    }

    /// Random forest: 20 trees of depth 5.
    pub fn forest() -> ModelPreset {
        ModelPreset {
            name: "forest".into(),
            config: TrainConfig {
                n_trees: 20,
                max_depth: 5,
                learning_rate: 1.0,
                mode: TrainMode::Forest,
                seed: 0,
                min_samples_leaf: 20,
                min_split_gain: 0.0,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub datasets: Vec<Dataset>,
    pub models: Vec<ModelPreset>,
    pub folds: usize,
    pub seed: u64,
    pub n_attacks: usize,
    pub normal_ratio: usize,
    pub detectors: Vec<DetectorId>,
    pub fractions: Vec<f64>,
    pub iforest_trees: usize,
    pub iforest_subsample: usize,
    pub attack_cap: u64,
    pub kernel: Kernel,
}

impl EvalConfig {
    pub fn new(datasets: Vec<Dataset>) -> EvalConfig {
        EvalConfig {
            datasets,
            models: vec![ModelPreset::boost(), ModelPreset::forest()],
            folds: 5,
            seed: 0,
            n_attacks: 100,
            normal_ratio: 5,
            detectors: DetectorId::ALL.to_vec(),
            fractions: DEFAULT_FRACTIONS.to_vec(),
            iforest_trees: DEFAULT_TREES,
            iforest_subsample: DEFAULT_SUBSAMPLE,
            attack_cap: DEFAULT_CAP,
            kernel: Kernel::detect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AucRow {
    pub dataset: String,
    pub model: String,
    pub detector: String,
    pub adv_kind: String,
    pub fold: usize,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub dataset: String,
    pub model: String,
    pub detector: String,
    pub threshold: f64,
    pub coverage: f64,
    pub detection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub detector: String,
    pub mean_ms: f64,
    pub std_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefSweepRow {
    pub dataset: String,
    pub model: String,
    pub fraction: f64,
    pub auc: f64,
    pub mean_ms: f64,
}

/// Mean normalized OC-space distance of attacks and of norm-matched random
/// perturbations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceRow {
    pub dataset: String,
    pub model: String,
    pub adv_kind: String,
    pub fold: usize,
    pub n: usize,
    pub mean_adversarial: f64,
    pub mean_random: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldRow {
    pub dataset: String,
    pub model: String,
    pub fold: usize,
    pub test_accuracy: f64,
    pub delta_med: f64,
    pub n_closest: usize,
    pub n_x2: usize,
    pub n_x5: usize,
    pub dropped_closest: usize,
    pub dropped_x2: usize,
    pub dropped_x5: usize,
}

#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub auc: Vec<AucRow>,
    pub curve: Vec<CurveRow>,
    pub timings: Vec<TimingRow>,
    pub refsweep: Vec<RefSweepRow>,
    pub distances: Vec<DistanceRow>,
    pub folds: Vec<FoldRow>,
}

impl EvalReport {
    pub fn aucs<'a>(&'a self, dataset: &'a str, model: &'a str, detector: DetectorId, kind: AttackKind) -> impl Iterator<Item = f64> + 'a {
        let (d, k) = (detector.name(), kind.to_string());
        self.auc
            .iter()
            .filter(move |r| r.dataset == dataset && r.model == model && r.detector == d && r.adv_kind == k)
            .map(|r| r.auc)
    }

    /// AUC averaged over folds.
    pub fn mean_auc(&self, dataset: &str, model: &str, detector: DetectorId, kind: AttackKind) -> Option<f64> {
        mean(&self.aucs(dataset, model, detector, kind).collect::<Vec<_>>())
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs the full protocol. Every random choice is seeded from `cfg.seed`
/// through [`derive_seed`] with the path `(dataset, model, fold, task)`.
pub fn evaluate(cfg: &EvalConfig) -> Result<EvalReport> {
    if cfg.detectors.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut report = EvalReport::default();
    let mut timing: Vec<Vec<f64>> = vec![Vec::new(); cfg.detectors.len()];
    for (di, ds) in cfg.datasets.iter().enumerate() {
        let splits = kfold_split(&ds.ys, cfg.folds, derive_seed(cfg.seed, &[di as u64]))?;
        for (mi, preset) in cfg.models.iter().enumerate() {
            let mut pooled: Vec<Vec<(f64, bool)>> = vec![Vec::new(); cfg.detectors.len()];
            for (fold, (train_rows, test_rows)) in splits.iter().enumerate() {
                let path = |task: u64| derive_seed(cfg.seed, &[di as u64, mi as u64, fold as u64, task]);
                let raw_train = ds.select(train_rows);
                let ranges = FeatureRanges::fit(&raw_train.xs)?;
                let train_set = Dataset::new(&ds.name, ranges.normalize_all(&raw_train.xs), raw_train.ys)?;
                let raw_test = ds.select(test_rows);
                let test_set = Dataset::new(&ds.name, ranges.normalize_all(&raw_test.xs), raw_test.ys)?;

                let mut tc = preset.config.clone();
                tc.seed = path(0);
                let e = train(&train_set.xs, &train_set.ys, &tc)?;
                let reference = build_reference(&e, &train_set.xs, &train_set.ys)?;
                let iforest = if cfg.detectors.contains(&DetectorId::IForest) {
                    Some(fit_iforest(&train_set.xs, cfg.iforest_trees, cfg.iforest_subsample, path(1))?)
                } else {
                    None
                };
                let dets = Detectors {
                    ensemble: &e,
                    reference: Some(&reference),
                    iforest: iforest.as_ref(),
                    kernel: cfg.kernel,
                };
                let adv = build_adv_sets(
                    &e,
                    &test_set,
                    &AdvConfig {
                        n_attacks: cfg.n_attacks,
                        normal_ratio: cfg.normal_ratio,
                        seed: path(2),
                        cap: cfg.attack_cap,
                    },
                )?;

                let correct = test_set
                    .xs
                    .iter()
                    .zip(&test_set.ys)
                    .filter(|(x, &y)| e.evaluate(x).map(|p| p.label == y).unwrap_or(false))
                    .count();
                report.folds.push(FoldRow {
                    dataset: ds.name.clone(),
                    model: preset.name.clone(),
                    fold,
                    test_accuracy: correct as f64 / test_set.len() as f64,
                    delta_med: adv.delta_med,
                    n_closest: adv.sets[0].attacks.len(),
                    n_x2: adv.sets[1].attacks.len(),
                    n_x5: adv.sets[2].attacks.len(),
                    dropped_closest: adv.sets[0].dropped,
                    dropped_x2: adv.sets[1].dropped,
                    dropped_x5: adv.sets[2].dropped,
                });

                let domain = LeafBox::unit(e.n_features());
                let mut sweep_set: Option<EvalSet> = None;
                for (k, set) in adv.sets.iter().enumerate() {
                    let (evalset, ms) = score_adv_set(&dets, &cfg.detectors, set, &test_set)?;
                    for (t, v) in timing.iter_mut().zip(ms) {
                        t.extend(v);
                    }
                    for (j, &id) in cfg.detectors.iter().enumerate() {
                        report.auc.push(AucRow {
                            dataset: ds.name.clone(),
                            model: preset.name.clone(),
                            detector: id.name().into(),
                            adv_kind: set.kind.to_string(),
                            fold,
                            auc: evalset.auc(id)?,
                        });
                        if set.kind == AttackKind::Closest {
                            pooled[j].extend(evalset.scores(id)?);
                        }
                    }
                    let pairs = adv_vs_random_distributions(&e, &set.attacks, &domain, path(3 + k as u64))?;
                    report.distances.push(DistanceRow {
                        dataset: ds.name.clone(),
                        model: preset.name.clone(),
                        adv_kind: set.kind.to_string(),
                        fold,
                        n: pairs.len(),
                        mean_adversarial: mean(&pairs.iter().map(|p| p.adversarial).collect::<Vec<_>>()).unwrap_or(0.0),
                        mean_random: mean(&pairs.iter().map(|p| p.random).collect::<Vec<_>>()).unwrap_or(0.0),
                    });
                    if fold == 0 && set.kind == AttackKind::Budget5x {
                        sweep_set = Some(evalset);
                    }
                }
                if let Some(set) = sweep_set.filter(|_| !cfg.fractions.is_empty()) {
                    for SweepRow { fraction, auc, mean_ms } in
                        refset_sweep(&e, &reference, &set, &cfg.fractions, path(6), cfg.kernel)?
                    {
                        report.refsweep.push(RefSweepRow {
                            dataset: ds.name.clone(),
                            model: preset.name.clone(),
                            fraction,
                            auc,
                            mean_ms,
                        });
                    }
                }
            }
            for (j, &id) in cfg.detectors.iter().enumerate() {
                for p in coverage_detection_curve(&pooled[j])? {
                    report.curve.push(CurveRow {
                        dataset: ds.name.clone(),
                        model: preset.name.clone(),
                        detector: id.name().into(),
                        threshold: p.threshold,
                        coverage: p.coverage,
                        detection_rate: p.detection_rate,
                    });
                }
            }
        }
    }
    for (&id, t) in cfg.detectors.iter().zip(&timing) {
        let m = mean(t).unwrap_or(0.0);
        let var = mean(&t.iter().map(|v| (v - m) * (v - m)).collect::<Vec<_>>()).unwrap_or(0.0);
        report.timings.push(TimingRow {
            detector: id.name().into(),
            mean_ms: m,
            std_ms: var.sqrt(),
        });
    }
    Ok(report)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header).map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    File::create(path)?.write_all(&bytes)?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub const RESULT_FILES: [&str; 6] = [
    "auc.csv",
    "curve.csv",
    "timings.csv",
    "refsweep.csv",
    "advrandom.csv",
    "folds.csv",
];

/// Writes the result tables into `dir` (created if missing).
pub fn write_results(report: &EvalReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("auc.csv"), &report.auc, &["dataset", "model", "detector", "adv_kind", "fold", "auc"])?;
    write_csv(
        &dir.join("curve.csv"),
        &report.curve,
        &["dataset", "model", "detector", "threshold", "coverage", "detection_rate"],
    )?;
    write_csv(&dir.join("timings.csv"), &report.timings, &["detector", "mean_ms", "std_ms"])?;
    write_csv(
        &dir.join("refsweep.csv"),
        &report.refsweep,
        &["dataset", "model", "fraction", "auc", "mean_ms"],
    )?;
    write_csv(
        &dir.join("advrandom.csv"),
        &report.distances,
        &["dataset", "model", "adv_kind", "fold", "n", "mean_adversarial", "mean_random"],
    )?;
    write_csv(&dir.join("folds.csv"), &report.folds, &["dataset", "model", "fold"])?;
    Ok(())
}
