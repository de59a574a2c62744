//! Command-line front end: train, evaluate, predict, variance, synth,
//! magnitudes.
//!
//! Exit codes: 0 on success, 2 for usage problems, 1 for runtime failures.
//! Set `MBMF_LOG=info` (or `debug`) for iteration logs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mbmf::baselines::{train_mf, train_nmf};
use mbmf::data::{
    behaviors_to_interest, load_behavior_log, load_triplets, make_validation_folds,
    save_fold_manifest, save_triplets, split_historical_present, FoldMode, SparseObservations,
};
use mbmf::error::Result;
use mbmf::eval::{
    evaluate as compute_metrics, generate_synthetic, variance_experiment, write_metrics_csv,
    write_variance_csv, EvalReport, F1Aggregation, MetricsRow, VarianceAlgorithm,
};
use mbmf::magnitudes::{
    center_bounded, center_rank_one, centered_range_magnitudes, historical_magnitude_pair,
    load_magnitudes, magnitudes_for_labels, nonneg_range_magnitudes, observed_bounds,
    save_magnitudes, shift_nonnegative, ContradictionPolicy, PreprocessRecord, Variant,
    DEFAULT_RHO,
};
use mbmf::model::{load as load_model, save as save_model, TrainedModel};
use mbmf::optimizer::{predict, train, TrainConfig};
use mbmf::spherical::MagnitudePair;

#[derive(Parser)]
#[command(
    name = "mbmf",
    about = "Magnitude bounded matrix factorisation for sparse recommender data",
    version
)]
struct Cli {
    /// Worker threads for fold/repetition parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a bounded model on a triplet or behavior-log file.
    Train(TrainArgs),
    /// Historical/present split, validation folds, per-K metrics.
    Evaluate(EvaluateArgs),
    /// Predict values for user,item pairs from a saved model.
    Predict(PredictArgs),
    /// Prediction-variance protocol over a K sweep.
    Variance(VarianceArgs),
    /// Generate a synthetic observation matrix.
    Synth(SynthArgs),
    /// Compute and export magnitude vectors.
    Magnitudes(MagnitudesArgs),
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Input data file.
    #[arg(long)]
    input: PathBuf,
    /// Field delimiter.
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Skip one header line.
    #[arg(long, default_value_t = false)]
    has_header: bool,
    /// Input layout: `triplets` (user,item,value) or `behaviors`
    /// (user,category,behavior).
    #[arg(long, default_value = "triplets")]
    input_format: String,
    /// Interest weights for click,collect,cart,pay when reading behaviors.
    #[arg(long, default_value = "1,2,3,5")]
    behavior_weights: String,
}

#[derive(Args, Clone)]
struct MagnitudeArgs {
    /// Magnitude source: `type1` (constant from the value range),
    /// `historical` (blended row/column statistics), or
    /// `file:<users.csv>,<items.csv>`.
    #[arg(long, default_value = "type1")]
    magnitudes: String,
    /// Fraction of the opposite dimension a row must have rated for its own
    /// history to fully determine its magnitude.
    #[arg(long, default_value_t = DEFAULT_RHO)]
    rho: f64,
    /// Declared lower bound of the data range.
    #[arg(long)]
    r_min: Option<f64>,
    /// Declared upper bound of the data range.
    #[arg(long)]
    r_max: Option<f64>,
    /// Handling of observations above twice their cell bound when centering:
    /// raise, reject or error.
    #[arg(long, default_value = "raise")]
    policy: String,
}

#[derive(Args, Clone)]
struct OptimArgs {
    /// Latent dimension.
    #[arg(long)]
    k: usize,
    /// Bounding variant: `c` (centered) or `n` (non-negative).
    #[arg(long, default_value = "n")]
    variant: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    /// Initial step size for both angle matrices.
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    mags: MagnitudeArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Optional per-iteration trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    mags: MagnitudeArgs,
    /// Latent dimensions to sweep, comma-separated.
    #[arg(long, default_value = "10,20,50")]
    k_list: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0.1)]
    fraction: f64,
    /// `disjoint` or `independent` fold sampling.
    #[arg(long, default_value = "disjoint")]
    fold_mode: String,
    /// Algorithm to evaluate: mbmf, mf or nmf.
    #[arg(long, default_value = "mbmf")]
    algorithm: String,
    /// F1 aggregation: micro or macro.
    #[arg(long, default_value = "micro")]
    f1: String,
    /// Bounding variant for mbmf: `c` or `n`.
    #[arg(long, default_value = "n")]
    variant: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    /// Output report CSV.
    #[arg(long)]
    out: PathBuf,
    /// Optional fold manifest (one fold of entry positions per line).
    #[arg(long)]
    save_folds: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Saved model file.
    #[arg(long)]
    model: PathBuf,
    /// Pair list file with `user,item` per line.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    #[arg(long, default_value_t = false)]
    has_header: bool,
    /// Output CSV (`user,item,prediction`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VarianceArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    m: usize,
    /// Value range `lo,hi`.
    #[arg(long, default_value = "0,10")]
    range: String,
    #[arg(long, default_value_t = 0.2)]
    density: f64,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    /// Latent dimensions to sweep; defaults to 5,10,...,50.
    #[arg(long)]
    k_list: Option<String>,
    /// Comma-separated algorithms: mf, nmf, mbmf-n, constant:<value>.
    #[arg(long, default_value = "mf,nmf,mbmf-n")]
    algorithms: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    /// Value range `lo,hi`.
    #[arg(long, default_value = "0,10")]
    range: String,
    #[arg(long, default_value_t = 0.2)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the complete matrix.
    #[arg(long)]
    out_full: PathBuf,
    /// Where to write the kept (observed) part.
    #[arg(long)]
    out_observed: PathBuf,
}

#[derive(Args)]
struct MagnitudesArgs {
    #[command(flatten)]
    input: InputArgs,
    /// `historical` (treat the input as the historical matrix),
    /// `range-c` or `range-n` (constant magnitudes from the range).
    #[arg(long, default_value = "historical")]
    mode: String,
    #[arg(long, default_value_t = DEFAULT_RHO)]
    rho: f64,
    #[arg(long)]
    r_min: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    /// Output file for row (user) magnitudes.
    #[arg(long)]
    out_users: PathBuf,
    /// Output file for column (item) magnitudes.
    #[arg(long)]
    out_items: PathBuf,
}

/// A flag-level problem: reported on stderr, exit code 2.
struct Usage(String);

fn usage(message: impl Into<String>) -> Usage {
    Usage(message.into())
}

type Outcome = std::result::Result<Result<()>, Usage>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MBMF_LOG", "warn")).init();
    let cli = Cli::parse();
    if cli.jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Variance(args) => cmd_variance(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Magnitudes(args) => cmd_magnitudes(args),
    };
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(runtime)) => {
            eprintln!("error: {runtime}");
            ExitCode::FAILURE
        }
        Err(Usage(message)) => {
            eprintln!("usage error: {message}");
            ExitCode::from(2)
        }
    }
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> std::result::Result<Vec<T>, Usage> {
    let items: std::result::Result<Vec<T>, _> =
        raw.split(',').map(|tok| tok.trim().parse::<T>()).collect();
    match items {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(usage(format!("cannot parse {what} list `{raw}`"))),
    }
}

fn parse_range(raw: &str) -> std::result::Result<(f64, f64), Usage> {
    let parts = parse_list::<f64>(raw, "range")?;
    if parts.len() != 2 || parts[1] <= parts[0] {
        return Err(usage(format!(
            "range must be `lo,hi` with hi > lo, got `{raw}`"
        )));
    }
    Ok((parts[0], parts[1]))
}

fn load_input(args: &InputArgs) -> std::result::Result<Result<SparseObservations>, Usage> {
    match args.input_format.as_str() {
        "triplets" => Ok(load_triplets(&args.input, args.delimiter, args.has_header)),
        "behaviors" => {
            let weights = parse_list::<f64>(&args.behavior_weights, "behavior weight")?;
            let weights: [f64; 4] = weights
                .try_into()
                .map_err(|_| usage("behavior weights need exactly 4 values"))?;
            Ok(load_behavior_log(&args.input, args.delimiter)
                .and_then(|log| behaviors_to_interest(&log, weights)))
        }
        other => Err(usage(format!(
            "unknown input format `{other}` (expected triplets or behaviors)"
        ))),
    }
}

enum MagnitudeSource {
    Range,
    Historical,
    Files(PathBuf, PathBuf),
}

fn parse_magnitude_source(raw: &str) -> std::result::Result<MagnitudeSource, Usage> {
    match raw {
        "type1" | "range" => Ok(MagnitudeSource::Range),
        "historical" => Ok(MagnitudeSource::Historical),
        other => {
            if let Some(paths) = other.strip_prefix("file:") {
                let parts: Vec<&str> = paths.split(',').collect();
                if parts.len() != 2 {
                    return Err(usage(
                        "file magnitudes need two paths: file:<users.csv>,<items.csv>",
                    ));
                }
                Ok(MagnitudeSource::Files(parts[0].into(), parts[1].into()))
            } else {
                Err(usage(format!(
                    "unknown magnitude source `{other}` (expected type1, historical or file:<u>,<i>)"
                )))
            }
        }
    }
}

struct Pipeline {
    /// Preprocessed data ready for the bounded trainer.
    train_data: SparseObservations,
    mags: MagnitudePair,
    record: PreprocessRecord,
}

/// Flag-combination checks for the bounded pipeline that need no data.
fn validate_pipeline_flags(
    variant: Variant,
    args: &MagnitudeArgs,
) -> std::result::Result<(MagnitudeSource, ContradictionPolicy), Usage> {
    let source = parse_magnitude_source(&args.magnitudes)?;
    let policy: ContradictionPolicy = args.policy.parse().map_err(Usage)?;
    if matches!(source, MagnitudeSource::Range)
        && variant == Variant::Centered
        && (args.r_min.is_none() || args.r_max.is_none())
    {
        return Err(usage(
            "the centered variant with range magnitudes needs explicit --r-min and --r-max; \
             unbounded data has no centering reference (use historical or file magnitudes)",
        ));
    }
    Ok((source, policy))
}

/// Resolves preprocessing for the bounded trainer. `historical` supplies the
/// statistics for historical magnitudes; for the range source the declared
/// bounds come from the flags or, in the non-negative variant, fall back to
/// the observed ones. Centering against historical or file magnitudes
/// requires non-negative input.
fn resolve_pipeline(
    data: &SparseObservations,
    historical: Option<&SparseObservations>,
    variant: Variant,
    source: &MagnitudeSource,
    policy: ContradictionPolicy,
    args: &MagnitudeArgs,
) -> Result<Pipeline> {
    let observed = observed_bounds(data)?;
    match (source, variant) {
        (MagnitudeSource::Range, Variant::Nonnegative) => {
            let r_min = args.r_min.unwrap_or(observed.0);
            let r_max = args.r_max.unwrap_or(observed.1);
            let (shifted, record) = shift_nonnegative(data, r_min);
            let shifted_max = r_max - r_min.min(0.0);
            let mags = nonneg_range_magnitudes(data.n_rows(), data.n_cols(), shifted_max)?;
            Ok(Pipeline {
                train_data: shifted,
                mags,
                record,
            })
        }
        (MagnitudeSource::Range, Variant::Centered) => {
            let r_min = args.r_min.expect("validated");
            let r_max = args.r_max.expect("validated");
            let (centered, record) = center_bounded(data, r_min, r_max)?;
            let mags = centered_range_magnitudes(data.n_rows(), data.n_cols(), r_min, r_max)?;
            Ok(Pipeline {
                train_data: centered,
                mags,
                record,
            })
        }
        (source, variant) => {
            let mags = match source {
                MagnitudeSource::Historical => {
                    historical_magnitude_pair(historical.unwrap_or(data), args.rho)?
                }
                MagnitudeSource::Files(users, items) => {
                    let r_w =
                        magnitudes_for_labels(&load_magnitudes(users)?, data.row_labels(), "user")?;
                    let r_h =
                        magnitudes_for_labels(&load_magnitudes(items)?, data.col_labels(), "item")?;
                    MagnitudePair::new(r_w, r_h)?
                }
                MagnitudeSource::Range => unreachable!(),
            };
            match variant {
                Variant::Centered => {
                    let (centered, mags, record, contradictions) =
                        center_rank_one(data, &mags, policy)?;
                    if !contradictions.is_empty() {
                        log::warn!(
                            "{} observation(s) exceeded twice their cell bound (policy {})",
                            contradictions.len(),
                            args.policy
                        );
                    }
                    Ok(Pipeline {
                        train_data: centered,
                        mags,
                        record,
                    })
                }
                Variant::Nonnegative => {
                    let (shifted, record) = shift_nonnegative(data, observed.0);
                    Ok(Pipeline {
                        train_data: shifted,
                        mags,
                        record,
                    })
                }
            }
        }
    }
}

fn cmd_train(args: TrainArgs) -> Outcome {
    let variant: Variant = args.optim.variant.parse().map_err(Usage)?;
    if args.optim.k < 2 {
        return Err(usage(format!(
            "--k must be at least 2 (got {}): a single factor coordinate leaves no angle to optimize",
            args.optim.k
        )));
    }
    let (source, policy) = validate_pipeline_flags(variant, &args.mags)?;
    let data = match load_input(&args.input)? {
        Ok(data) => data,
        Err(e) => return Ok(Err(e)),
    };

    let run = || -> Result<()> {
        // Historical magnitudes come from one half of a seeded split and the
        // model trains on the other half; range/file magnitudes use the
        // whole input.
        let (train_input, historical) = if matches!(source, MagnitudeSource::Historical) {
            let plan = split_historical_present(&data, args.optim.seed)?;
            (plan.present, Some(plan.historical))
        } else {
            (data.clone(), None)
        };
        let pipeline =
            resolve_pipeline(&train_input, historical.as_ref(), variant, &source, policy, &args.mags)?;
        let cfg = TrainConfig {
            k: args.optim.k,
            max_iters: args.optim.max_iters,
            tol: args.optim.tol,
            patience: args.optim.patience,
            lr_phi: args.optim.lr,
            lr_theta: args.optim.lr,
            seed: args.optim.seed,
            variant,
            ..TrainConfig::new(args.optim.k)
        };
        let (factors, trace) = train(&pipeline.train_data, &pipeline.mags, &cfg)?;
        let model = TrainedModel::new(
            factors,
            Some(pipeline.record),
            train_input.row_labels().to_vec(),
            train_input.col_labels().to_vec(),
        )?;
        save_model(&model, &args.out)?;
        if let Some(trace_path) = &args.trace {
            trace.write_csv(trace_path)?;
        }
        println!(
            "final objective {:.6e} after {} iterations ({:?})",
            trace.final_objective(),
            trace.iterations_run(),
            trace.termination
        );
        Ok(())
    };
    Ok(run())
}

fn cmd_evaluate(args: EvaluateArgs) -> Outcome {
    let variant: Variant = args.variant.parse().map_err(Usage)?;
    let k_list = parse_list::<usize>(&args.k_list, "K")?;
    let fold_mode = match args.fold_mode.as_str() {
        "disjoint" => FoldMode::Disjoint,
        "independent" => FoldMode::Independent,
        other => return Err(usage(format!("unknown fold mode `{other}`"))),
    };
    let aggregation = match args.f1.as_str() {
        "micro" => F1Aggregation::Micro,
        "macro" => F1Aggregation::Macro,
        other => return Err(usage(format!("unknown f1 aggregation `{other}`"))),
    };
    if !matches!(args.algorithm.as_str(), "mbmf" | "mf" | "nmf") {
        return Err(usage(format!(
            "unknown algorithm `{}` (expected mbmf, mf or nmf)",
            args.algorithm
        )));
    }
    let is_mbmf = args.algorithm == "mbmf";
    let pipeline_flags = if is_mbmf {
        let (source, policy) = validate_pipeline_flags(variant, &args.mags)?;
        if matches!(policy, ContradictionPolicy::RejectOutlier) {
            return Err(usage(
                "evaluate keeps fold entry positions stable and cannot drop contradictions; \
                 use --policy raise or --policy error",
            ));
        }
        if k_list.iter().any(|&k| k < 2) {
            return Err(usage("--k-list values must be at least 2 for mbmf"));
        }
        Some((source, policy))
    } else {
        None
    };
    let data = match load_input(&args.input)? {
        Ok(data) => data,
        Err(e) => return Ok(Err(e)),
    };

    let run = || -> Result<()> {
        let plan = split_historical_present(&data, args.seed)?;
        let folds =
            make_validation_folds(&plan.present, args.folds, args.fraction, args.seed, fold_mode)?;
        if let Some(path) = &args.save_folds {
            save_fold_manifest(&folds, path)?;
        }

        let pipeline = match &pipeline_flags {
            Some((source, policy)) => Some(resolve_pipeline(
                &plan.present,
                Some(&plan.historical),
                variant,
                source,
                *policy,
                &args.mags,
            )?),
            None => None,
        };
        let algorithm_label = if is_mbmf {
            format!(
                "mbmf-{}",
                if variant == Variant::Centered { "c" } else { "n" }
            )
        } else {
            args.algorithm.clone()
        };

        use rayon::prelude::*;
        let mut rows: Vec<MetricsRow> = Vec::new();
        for &k in &k_list {
            let fold_rows: Vec<Result<MetricsRow>> = folds
                .par_iter()
                .enumerate()
                .map(|(fold_index, fold)| {
                    let pairs: Vec<(usize, usize)> = plan
                        .present
                        .entries_at(fold)?
                        .iter()
                        .map(|e| (e.row, e.col))
                        .collect();
                    let seed =
                        mbmf::derive_seed(args.seed, &format!("train/k{k}/fold{fold_index}"));
                    let cfg = TrainConfig {
                        max_iters: args.max_iters,
                        tol: args.tol,
                        patience: args.patience,
                        seed,
                        variant,
                        ..TrainConfig::new(k.max(2))
                    };
                    let predictions = match (&pipeline, args.algorithm.as_str()) {
                        (Some(p), _) => {
                            let view = p.train_data.without_entries(fold);
                            let (model, _) = train(&view, &p.mags, &cfg)?;
                            predict(&model, Some(&p.record), &pairs)?
                        }
                        (None, "mf") => {
                            let view = plan.present.without_entries(fold);
                            let (model, _) = train_mf(&view, k, &cfg)?;
                            model.predict(&pairs)?
                        }
                        (None, _) => {
                            let view = plan.present.without_entries(fold);
                            let (model, _) = train_nmf(&view, k, &cfg)?;
                            model.predict(&pairs)?
                        }
                    };
                    let report = compute_metrics(&plan.present, fold, &predictions, aggregation)?;
                    Ok(MetricsRow {
                        algorithm: algorithm_label.clone(),
                        k,
                        fold: Some(fold_index),
                        report,
                    })
                })
                .collect();
            let fold_rows: Vec<MetricsRow> = fold_rows.into_iter().collect::<Result<_>>()?;
            let n = fold_rows.len() as f64;
            let avg = EvalReport {
                rmse: fold_rows.iter().map(|r| r.report.rmse).sum::<f64>() / n,
                mae: fold_rows.iter().map(|r| r.report.mae).sum::<f64>() / n,
                f1: fold_rows.iter().map(|r| r.report.f1).sum::<f64>() / n,
                n_eval_entries: fold_rows.iter().map(|r| r.report.n_eval_entries).sum(),
            };
            println!(
                "K={k}: avg rmse {:.4} mae {:.4} f1 {:.2}",
                avg.rmse, avg.mae, avg.f1
            );
            rows.extend(fold_rows);
            rows.push(MetricsRow {
                algorithm: algorithm_label.clone(),
                k,
                fold: None,
                report: avg,
            });
        }
        write_metrics_csv(&rows, &args.out)?;
        Ok(())
    };
    Ok(run())
}

fn cmd_predict(args: PredictArgs) -> Outcome {
    let run = || -> Result<()> {
        let model = load_model(&args.model)?;
        let (row_map, col_map) = model.label_maps();
        let text =
            std::fs::read_to_string(&args.pairs).map_err(|e| mbmf::Error::io(&args.pairs, e))?;
        let mut out = String::from("user,item,prediction\n");
        for (lineno, line) in text.lines().enumerate() {
            if args.has_header && lineno == 0 {
                continue;
            }
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split(args.delimiter);
            let (user, item) = match (fields.next(), fields.next()) {
                (Some(u), Some(i)) => (u.trim(), i.trim()),
                _ => {
                    return Err(mbmf::Error::MalformedLine {
                        path: args.pairs.clone(),
                        line: lineno as u64 + 1,
                        reason: "expected `user,item`".to_string(),
                    })
                }
            };
            match (row_map.get(user), col_map.get(item)) {
                (Some(&i), Some(&j)) => {
                    let value = predict(&model.factors, model.record.as_ref(), &[(i, j)])?[0];
                    out.push_str(&format!("{user},{item},{value}\n"));
                }
                // Unknown ids produce a marker row instead of failing the run.
                _ => out.push_str(&format!("{user},{item},NA\n")),
            }
        }
        std::fs::write(&args.out, out).map_err(|e| mbmf::Error::io(&args.out, e))?;
        Ok(())
    };
    Ok(run())
}

fn parse_algorithms(raw: &str) -> std::result::Result<Vec<VarianceAlgorithm>, Usage> {
    raw.split(',')
        .map(|tok| match tok.trim() {
            "mf" => Ok(VarianceAlgorithm::Mf),
            "nmf" => Ok(VarianceAlgorithm::Nmf),
            "mbmf-n" => Ok(VarianceAlgorithm::MbmfN),
            other => {
                if let Some(value) = other.strip_prefix("constant:") {
                    value
                        .parse()
                        .map(VarianceAlgorithm::Constant)
                        .map_err(|_| usage(format!("bad constant value `{value}`")))
                } else {
                    Err(usage(format!(
                        "unknown algorithm `{other}` (expected mf, nmf, mbmf-n or constant:<v>)"
                    )))
                }
            }
        })
        .collect()
}

fn cmd_variance(args: VarianceArgs) -> Outcome {
    let range = parse_range(&args.range)?;
    let algorithms = parse_algorithms(&args.algorithms)?;
    let k_list = match &args.k_list {
        Some(raw) => parse_list::<usize>(raw, "K")?,
        None => (1..=10).map(|i| i * 5).collect(),
    };
    if k_list.iter().any(|&k| k < 2)
        && algorithms
            .iter()
            .any(|a| matches!(a, VarianceAlgorithm::MbmfN))
    {
        return Err(usage("--k-list values must be at least 2 for mbmf-n"));
    }
    let run = || -> Result<()> {
        let mut all = Vec::new();
        for &k in &k_list {
            let seed = mbmf::derive_seed(args.seed, &format!("variance/k{k}"));
            let reports = variance_experiment(
                &algorithms,
                args.n,
                args.m,
                range,
                args.density,
                args.reps,
                k,
                seed,
            )?;
            for r in &reports {
                println!(
                    "K={k} {:10} ave_sigma {:.4} max_sigma {:.4}",
                    r.algorithm, r.ave_sigma, r.max_sigma
                );
            }
            all.extend(reports);
        }
        write_variance_csv(&all, &args.out)?;
        Ok(())
    };
    Ok(run())
}

fn cmd_synth(args: SynthArgs) -> Outcome {
    let range = parse_range(&args.range)?;
    let run = || -> Result<()> {
        let (full, observed) = generate_synthetic(args.n, args.m, range, args.density, args.seed)?;
        save_triplets(&full, &args.out_full, ',', true)?;
        save_triplets(&observed, &args.out_observed, ',', true)?;
        println!(
            "wrote {} full and {} observed entries",
            full.len(),
            observed.len()
        );
        Ok(())
    };
    Ok(run())
}

fn cmd_magnitudes(args: MagnitudesArgs) -> Outcome {
    if !matches!(args.mode.as_str(), "historical" | "range-c" | "range-n") {
        return Err(usage(format!(
            "unknown mode `{}` (expected historical, range-c or range-n)",
            args.mode
        )));
    }
    if args.mode == "range-c" && (args.r_min.is_none() || args.r_max.is_none()) {
        return Err(usage("range-c magnitudes need explicit --r-min and --r-max"));
    }
    let data = match load_input(&args.input)? {
        Ok(data) => data,
        Err(e) => return Ok(Err(e)),
    };
    let run = || -> Result<()> {
        let mags: MagnitudePair = match args.mode.as_str() {
            "historical" => historical_magnitude_pair(&data, args.rho)?,
            "range-c" => centered_range_magnitudes(
                data.n_rows(),
                data.n_cols(),
                args.r_min.expect("validated"),
                args.r_max.expect("validated"),
            )?,
            _ => {
                let (lo, hi) = observed_bounds(&data)?;
                let r_min = args.r_min.unwrap_or(lo);
                let r_max = args.r_max.unwrap_or(hi);
                nonneg_range_magnitudes(data.n_rows(), data.n_cols(), r_max - r_min.min(0.0))?
            }
        };
        save_magnitudes(data.row_labels(), mags.r_w(), &args.out_users)?;
        save_magnitudes(data.col_labels(), mags.r_h(), &args.out_items)?;
        println!(
            "wrote {} user and {} item magnitudes",
            mags.n_rows(),
            mags.n_cols()
        );
        Ok(())
    };
    Ok(run())
}
