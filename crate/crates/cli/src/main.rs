//! `ocshield`: train tree ensembles, score inputs for adversarial examples,
//! run exact attacks and the evaluation protocol.

mod table;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ocshield_core::attack::{
    budgeted_adversarial_capped, closest_adversarial_capped, count_feasible, AttackKind, DEFAULT_CAP,
};
use ocshield_core::detectors::{fit_iforest, DEFAULT_SUBSAMPLE, DEFAULT_TREES};
use ocshield_core::harness::{
    evaluate, synthetic, write_results, Dataset, EvalConfig, ModelPreset, DEFAULT_SYNTHETIC_ROWS, SYNTHETIC,
};
use ocshield_core::ocspace::{read_reference_set, write_reference_set};
use ocshield_core::{
    build_reference, oc_score_with, parse_model, train, DetectorId, Detectors, Ensemble, Error, Kernel, LeafBox,
    ReferenceSet, TrainConfig, TrainMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Environment variable capping the number of worker threads.
const THREADS_ENV: &str = "OCSHIELD_THREADS";

#[derive(Parser, Debug)]
#[command(name = "ocshield", version)]
#[command(about = "Adversarial example detection for tree ensembles in output-configuration space")]
struct Cli {
    /// Force the scalar scan kernel
    #[arg(long, global = true)]
    no_simd: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an ensemble on a CSV with a `label` column
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "boosting")]
        mode: Mode,
        #[arg(long, default_value = "50")]
        trees: usize,
        #[arg(long, default_value = "4")]
        depth: usize,
        #[arg(long, default_value = "0")]
        seed: u64,
        #[arg(long, default_value = "0.3")]
        learning_rate: f64,
        #[arg(long, default_value = "5")]
        min_leaf: usize,
        /// Model JSON output
        #[arg(long)]
        out: PathBuf,
        /// Also write the reference set of correctly classified training rows
        #[arg(long)]
        refset_out: Option<PathBuf>,
    },
    /// Score inputs with one or more detectors
    Score {
        #[arg(long)]
        model: PathBuf,
        /// Binary reference set written by `train --refset-out`
        #[arg(long)]
        refset: Option<PathBuf>,
        /// Labeled training CSV; builds the reference set and fits the isolation forest
        #[arg(long)]
        train_data: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        /// Comma separated: ocscore, ambig, mlloo, iforest
        #[arg(long, default_value = "ocscore")]
        detectors: String,
        #[arg(long, default_value = "0")]
        seed: u64,
        /// Scores CSV (stdout if absent)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact L-infinity attacks on every input row
    Attack {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "closest")]
        kind: Kind,
        /// Perturbation budget for x2/x5 attacks
        #[arg(long)]
        budget: Option<f64>,
        /// Restrict perturbed points to the unit box
        #[arg(long, value_enum, default_value = "unit")]
        domain: Domain,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: u64,
        /// Attacks CSV (stdout if absent)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Perturbed points CSV
        #[arg(long)]
        witness_out: Option<PathBuf>,
    },
    /// Count feasible output configurations
    CountOcs {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: u64,
    },
    /// Run the cross-validated evaluation protocol
    Evaluate {
        /// Built-in synthetic dataset name or a labeled CSV
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "5")]
        folds: usize,
        #[arg(long, default_value = "0")]
        seed: u64,
        #[arg(long, default_value = "100")]
        attacks: usize,
        /// Normal examples per adversarial example
        #[arg(long, default_value = "5")]
        normal_ratio: usize,
        /// Comma separated: boost, forest
        #[arg(long, default_value = "boost,forest")]
        models: String,
        #[arg(long, default_value = "ocscore,ambig,mlloo,iforest")]
        detectors: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Time reference scans, SIMD against scalar
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        refset: PathBuf,
        #[arg(long, default_value = "1000")]
        queries: usize,
        #[arg(long, default_value = "7")]
        runs: usize,
        #[arg(long, default_value = "0")]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Boosting,
    Forest,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Closest,
    X2,
    X5,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Domain {
    Unit,
    Unbounded,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

/// A closed stdout (for example `| head`) is not an error.
fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        let io = c
            .downcast_ref::<std::io::Error>()
            .or_else(|| match c.downcast_ref::<csv::Error>().map(csv::Error::kind) {
                Some(csv::ErrorKind::Io(io)) => Some(io),
                _ => None,
            });
        io.is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got '{v}'"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn require_file(path: &Path) -> Result<()> {
    ensure!(path.is_file(), "{} does not exist", path.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<Ensemble> {
    require_file(path)?;
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_model(&bytes).with_context(|| format!("{}", path.display()))
}

fn load_refset(path: &Path) -> Result<ReferenceSet> {
    require_file(path)?;
    let f = File::open(path)?;
    read_reference_set(BufReader::new(f)).with_context(|| format!("{}", path.display()))
}

fn kernel(no_simd: bool) -> Kernel {
    if no_simd {
        Kernel::Scalar
    } else {
        Kernel::detect()
    }
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let kernel = kernel(cli.no_simd);
    match cli.command {
        Command::Train {
            data,
            mode,
            trees,
            depth,
            seed,
            learning_rate,
            min_leaf,
            out,
            refset_out,
        } => {
            require_file(&data)?;
            let t = table::read(&data)?;
            let ys = t.labels(&data)?;
            let cfg = TrainConfig {
                n_trees: trees,
                max_depth: depth,
                learning_rate,
                mode: match mode {
                    Mode::Boosting => TrainMode::Boosting,
                    Mode::Forest => TrainMode::Forest,
                },
                seed,
                min_samples_leaf: min_leaf,
                ..TrainConfig::default()
            };
            let e = train(&t.xs, ys, &cfg)?;
            fs::write(&out, e.to_json()).with_context(|| format!("cannot write {}", out.display()))?;
            if let Some(path) = refset_out {
                let r = build_reference(&e, &t.xs, ys)?;
                let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
                write_reference_set(&r, BufWriter::new(f))?;
            }
        }
        Command::Score {
            model,
            refset,
            train_data,
            input,
            detectors,
            seed,
            out,
        } => {
            let e = load_model(&model)?;
            require_file(&input)?;
            let ids = DetectorId::parse_list(&detectors)?;
            let train_table = match &train_data {
                Some(p) => {
                    require_file(p)?;
                    Some(table::read(p)?)
                }
                None => None,
            };
            let reference = match (&refset, &train_table) {
                (Some(p), _) => Some(load_refset(p)?),
                (None, Some(t)) => Some(build_reference(&e, &t.xs, t.labels(train_data.as_deref().unwrap())?)?),
                (None, None) => None,
            };
            if ids.contains(&DetectorId::OcScore) && reference.is_none() {
                bail!("ocscore needs --refset or --train-data");
            }
            let iforest = if ids.contains(&DetectorId::IForest) {
                let Some(t) = &train_table else {
                    bail!("iforest needs --train-data");
                };
                Some(fit_iforest(&t.xs, DEFAULT_TREES, DEFAULT_SUBSAMPLE, seed)?)
            } else {
                None
            };
            if let Some(r) = &reference {
                r.check_compatible(&e)?;
            }
            let dets = Detectors {
                ensemble: &e,
                reference: reference.as_ref(),
                iforest: iforest.as_ref(),
                kernel,
            };
            let rows = table::read(&input)?;
            let mut w = table::writer(out.as_deref())?;
            let mut header = vec!["row".to_string(), "predicted_label".to_string()];
            header.extend(ids.iter().map(|d| d.name().to_string()));
            w.write_record(&header)?;
            for (i, x) in rows.xs.iter().enumerate() {
                let label = e.evaluate(x).map_err(|err| Error::AtIndex { index: i, source: Box::new(err) })?.label;
                let mut record = vec![i.to_string(), label.to_string()];
                for &id in &ids {
                    let s = dets.score(id, x).map_err(|err| Error::AtIndex { index: i, source: Box::new(err) })?;
                    record.push(s.score.to_string());
                }
                w.write_record(&record)?;
            }
            w.flush()?;
        }
        Command::Attack {
            model,
            input,
            kind,
            budget,
            domain,
            cap,
            out,
            witness_out,
        } => {
            let e = load_model(&model)?;
            require_file(&input)?;
            let kind = match kind {
                Kind::Closest => AttackKind::Closest,
                Kind::X2 => AttackKind::Budget2x,
                Kind::X5 => AttackKind::Budget5x,
            };
            let budget = match (kind, budget) {
                (AttackKind::Closest, _) => None,
                (_, Some(b)) if b > 0.0 && b.is_finite() => Some(b),
                (_, Some(b)) => bail!("--budget must be positive and finite, got {b}"),
                (_, None) => bail!("--kind {kind} needs --budget"),
            };
            let dom = match domain {
                Domain::Unit => LeafBox::unit(e.n_features()),
                Domain::Unbounded => LeafBox::unbounded(e.n_features()),
            };
            let rows = table::read(&input)?;
            use rayon::prelude::*;
            let results: Vec<_> = rows
                .xs
                .par_iter()
                .map(|x| match budget {
                    None => closest_adversarial_capped(&e, x, &dom, cap),
                    Some(b) => budgeted_adversarial_capped(&e, x, b, &dom, kind, cap),
                })
                .collect();
            let mut w = table::writer(out.as_deref())?;
            w.write_record(["example_id", "kind", "linf", "l0", "source_label", "flipped_prob"])?;
            let mut ww = match &witness_out {
                Some(p) => {
                    let mut ww = table::writer(Some(p))?;
                    let mut header = vec!["example_id".to_string()];
                    header.extend(rows.features.iter().cloned());
                    ww.write_record(&header)?;
                    Some(ww)
                }
                None => None,
            };
            let mut missing = 0;
            for (i, r) in results.into_iter().enumerate() {
                let a = match r {
                    Ok(a) => a,
                    Err(Error::NoAdversarialExists) => {
                        missing += 1;
                        continue;
                    }
                    Err(err) => return Err(Error::AtIndex { index: i, source: Box::new(err) }.into()),
                };
                w.write_record([
                    i.to_string(),
                    kind.to_string(),
                    a.linf.to_string(),
                    a.l0.to_string(),
                    a.source_label.to_string(),
                    a.flipped_prob.to_string(),
                ])?;
                if let Some(ww) = ww.as_mut() {
                    let mut record = vec![i.to_string()];
                    record.extend(a.perturbed.iter().map(f64::to_string));
                    ww.write_record(&record)?;
                }
            }
            w.flush()?;
            if let Some(mut ww) = ww {
                ww.flush()?;
            }
            if missing > 0 {
                eprintln!("{missing} of {} rows have no adversarial example", rows.xs.len());
            }
        }
        Command::CountOcs { model, cap } => {
            let e = load_model(&model)?;
            println!("{}", count_feasible(&e, cap)?);
        }
        Command::Evaluate {
            dataset,
            folds,
            seed,
            attacks,
            normal_ratio,
            models,
            detectors,
            out_dir,
        } => {
            let ds = load_dataset(&dataset, seed)?;
            let mut cfg = EvalConfig::new(vec![ds]);
            cfg.folds = folds;
            cfg.seed = seed;
            cfg.n_attacks = attacks;
            cfg.normal_ratio = normal_ratio;
            cfg.detectors = DetectorId::parse_list(&detectors)?;
            cfg.kernel = kernel;
            cfg.models = models
                .split(',')
                .map(str::trim)
                .filter(|m| !m.is_empty())
                .map(|m| match m {
                    "boost" => Ok(ModelPreset::boost()),
                    "forest" => Ok(ModelPreset::forest()),
                    other => bail!("unknown model '{other}' (expected boost or forest)"),
                })
                .collect::<Result<_>>()?;
            ensure!(!cfg.models.is_empty(), "--models is empty");
            ensure!(folds >= 2, "--folds must be at least 2");
            let report = evaluate(&cfg)?;
            write_results(&report, &out_dir)?;
        }
        Command::Bench {
            model,
            refset,
            queries,
            runs,
            seed,
        } => {
            let e = load_model(&model)?;
            let r = load_refset(&refset)?;
            r.check_compatible(&e)?;
            ensure!(queries > 0 && runs > 0, "--queries and --runs must be positive");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ocs: Vec<(Vec<u8>, u8)> = (0..queries)
                .map(|_| {
                    let oc: Vec<u8> = e.trees().iter().map(|t| rng.gen_range(0..t.leaf_count()) as u8).collect();
                    let label = e.predict_oc(&oc).label;
                    (oc, label)
                })
                .filter(|(_, label)| !r.partitions()[*label as usize].is_empty())
                .collect();
            ensure!(!ocs.is_empty(), "reference set has no rows for the sampled labels");
            let time = |k: Kernel| -> Result<f64> {
                let mut per_run = Vec::with_capacity(runs);
                for _ in 0..runs {
                    let start = Instant::now();
                    for (oc, label) in &ocs {
                        std::hint::black_box(oc_score_with(&r, oc, *label, k)?);
                    }
                    per_run.push(start.elapsed().as_secs_f64() * 1e3 / ocs.len() as f64);
                }
                per_run.sort_by(f64::total_cmp);
                Ok(per_run[per_run.len() / 2])
            };
            let fast = if kernel == Kernel::Scalar { Kernel::Scalar } else { Kernel::detect() };
            let scalar_ms = time(Kernel::Scalar)?;
            let fast_ms = time(fast)?;
            println!("kernel,median_ms_per_query");
            println!("scalar,{scalar_ms}");
            if fast != Kernel::Scalar {
                println!("{fast},{fast_ms}");
            }
            eprintln!(
                "{} reference rows, {} queries, speedup {:.1}x",
                r.physical_rows(),
                ocs.len(),
                scalar_ms / fast_ms
            );
        }
    }
    Ok(())
}

fn load_dataset(spec: &str, seed: u64) -> Result<Dataset> {
    if SYNTHETIC.contains(&spec) {
        return Ok(synthetic(spec, DEFAULT_SYNTHETIC_ROWS, seed)?);
    }
    let path = Path::new(spec);
    if !path.is_file() {
        bail!("'{spec}' is neither a built-in dataset ({}) nor a file", SYNTHETIC.join(", "));
    }
    let t = table::read(path)?;
    let ys = t.labels(path)?.to_vec();
    let name = path.file_stem().map_or("data".into(), |s| s.to_string_lossy().into_owned());
    Ok(Dataset::new(name, t.xs, ys)?)
}
