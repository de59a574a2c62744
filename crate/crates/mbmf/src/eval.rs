//! Metrics, synthetic data generation and the prediction-variance protocol.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::baselines::{train_mf, train_nmf};
use crate::data::{Entry, SparseObservations};
use crate::error::{Error, Result};
use crate::magnitudes::{nonneg_range_magnitudes, shift_nonnegative};
use crate::optimizer::{predict, train, TrainConfig};

/// Accuracy summary over one evaluation mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub rmse: f64,
    pub mae: f64,
    /// Percentage in [0, 100].
    pub f1: f64,
    pub n_eval_entries: usize,
}

/// How per-user recommendation decisions are pooled into one F1 number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum F1Aggregation {
    /// Pool every (user, item) decision, then one precision/recall pair.
    #[default]
    Micro,
    /// Average the per-user F1 scores.
    Macro,
}

fn masked_values(
    truth: &SparseObservations,
    mask: &[usize],
    predictions: &[f64],
) -> Result<Vec<(Entry, f64)>> {
    if mask.len() != predictions.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} mask entries against {} predictions",
            mask.len(),
            predictions.len()
        )));
    }
    if mask.is_empty() {
        return Err(Error::NoEntries);
    }
    let entries = truth.entries_at(mask)?;
    Ok(entries.into_iter().zip(predictions.iter().copied()).collect())
}

/// Root mean squared error over the masked cells.
pub fn rmse(truth: &SparseObservations, mask: &[usize], predictions: &[f64]) -> Result<f64> {
    let pairs = masked_values(truth, mask, predictions)?;
    let sum: f64 = pairs
        .iter()
        .map(|(e, p)| {
            let r = e.value - p;
            r * r
        })
        .sum();
    Ok((sum / pairs.len() as f64).sqrt())
}

/// Mean absolute error over the masked cells.
pub fn mae(truth: &SparseObservations, mask: &[usize], predictions: &[f64]) -> Result<f64> {
    let pairs = masked_values(truth, mask, predictions)?;
    let sum: f64 = pairs.iter().map(|(e, p)| (e.value - p).abs()).sum();
    Ok(sum / pairs.len() as f64)
}

/// Recommendation F1 as a percentage.
///
/// Per user, the truth threshold is that user's mean masked rating and an
/// item counts as truly recommended when its rating strictly exceeds it; the
/// prediction side applies the same rule to the predicted values. Users with
/// no masked entries contribute nothing. A user whose truth and predicted
/// sets are both empty makes no mistakes, so the degenerate no-decision case
/// scores 100.
pub fn f1_score(
    truth: &SparseObservations,
    mask: &[usize],
    predictions: &[f64],
    aggregation: F1Aggregation,
) -> Result<f64> {
    let pairs = masked_values(truth, mask, predictions)?;
    let mut by_user: HashMap<usize, Vec<(usize, f64, f64)>> = HashMap::new();
    for (e, p) in pairs {
        by_user.entry(e.row).or_default().push((e.col, e.value, p));
    }

    let f1_of = |tp: usize, fp: usize, fn_: usize| -> f64 {
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            100.0
        } else {
            100.0 * 2.0 * tp as f64 / denom as f64
        }
    };

    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    let mut per_user = Vec::with_capacity(by_user.len());
    for cells in by_user.values() {
        let n = cells.len() as f64;
        let truth_mean = cells.iter().map(|(_, t, _)| t).sum::<f64>() / n;
        let pred_mean = cells.iter().map(|(_, _, p)| p).sum::<f64>() / n;
        let truth_set: BTreeSet<usize> = cells
            .iter()
            .filter(|(_, t, _)| *t > truth_mean)
            .map(|(c, _, _)| *c)
            .collect();
        let pred_set: BTreeSet<usize> = cells
            .iter()
            .filter(|(_, _, p)| *p > pred_mean)
            .map(|(c, _, _)| *c)
            .collect();
        let hits = truth_set.intersection(&pred_set).count();
        tp += hits;
        fp += pred_set.len() - hits;
        fn_ += truth_set.len() - hits;
        per_user.push(f1_of(hits, pred_set.len() - hits, truth_set.len() - hits));
    }

    Ok(match aggregation {
        F1Aggregation::Micro => f1_of(tp, fp, fn_),
        F1Aggregation::Macro => per_user.iter().sum::<f64>() / per_user.len() as f64,
    })
}

/// All three metrics over one mask.
pub fn evaluate(
    truth: &SparseObservations,
    mask: &[usize],
    predictions: &[f64],
    aggregation: F1Aggregation,
) -> Result<EvalReport> {
    Ok(EvalReport {
        rmse: rmse(truth, mask, predictions)?,
        mae: mae(truth, mask, predictions)?,
        f1: f1_score(truth, mask, predictions, aggregation)?,
        n_eval_entries: mask.len(),
    })
}

fn check_density(n: usize, m: usize, density: f64) -> Result<usize> {
    if n == 0 || m == 0 {
        return Err(Error::DimensionMismatch(
            "synthetic matrices need non-empty dimensions".to_string(),
        ));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "density must lie in (0, 1], got {density}"
        )));
    }
    let kept = (density * (n * m) as f64).ceil() as usize;
    if kept < n.max(m) {
        return Err(Error::InfeasibleDensity {
            density,
            kept,
            n_rows: n,
            n_cols: m,
        });
    }
    Ok(kept)
}

/// One random cell per row and per column, pairing two shuffles so the kept
/// part of a synthetic matrix never has an empty row or column.
fn coverage_cells(n: usize, m: usize, rng: &mut impl rand::Rng) -> Vec<(usize, usize)> {
    use rand::seq::SliceRandom;
    let mut rows: Vec<usize> = (0..n).collect();
    let mut cols: Vec<usize> = (0..m).collect();
    rows.shuffle(rng);
    cols.shuffle(rng);
    (0..n.max(m)).map(|i| (rows[i % n], cols[i % m])).collect()
}

/// Generates a full uniform random matrix rescaled to exactly span
/// `value_range`, plus a kept subset of `ceil(density * n * m)` cells that
/// covers every row and column. Returns `(full, observed)`.
pub fn generate_synthetic(
    n: usize,
    m: usize,
    value_range: (f64, f64),
    density: f64,
    seed: u64,
) -> Result<(SparseObservations, SparseObservations)> {
    let (lo, hi) = value_range;
    if !(hi > lo) {
        return Err(Error::InvalidConfig(format!(
            "value range must be non-degenerate, got [{lo}, {hi}]"
        )));
    }
    let kept = check_density(n, m, density)?;
    let mut rng = crate::stream_rng(seed, "synth");

    let mut values: Vec<f64> = (0..n * m).map(|_| rng.random_range(lo..hi)).collect();
    let (mut v_min, mut v_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &values {
        v_min = v_min.min(v);
        v_max = v_max.max(v);
    }
    if v_max > v_min {
        for v in &mut values {
            *v = lo + (*v - v_min) * (hi - lo) / (v_max - v_min);
        }
    }

    let full_entries: Vec<Entry> = (0..n * m)
        .map(|cell| Entry {
            row: cell / m,
            col: cell % m,
            value: values[cell],
        })
        .collect();

    let mut taken: HashSet<usize> = HashSet::with_capacity(kept);
    for (row, col) in coverage_cells(n, m, &mut rng) {
        taken.insert(row * m + col);
    }
    let free: Vec<usize> = (0..n * m).filter(|cell| !taken.contains(cell)).collect();
    let extra = kept - taken.len();
    for idx in rand::seq::index::sample(&mut rng, free.len(), extra) {
        taken.insert(free[idx]);
    }

    let mut kept_cells: Vec<usize> = taken.into_iter().collect();
    kept_cells.sort_unstable();
    let observed_entries: Vec<Entry> = kept_cells
        .into_iter()
        .map(|cell| Entry {
            row: cell / m,
            col: cell % m,
            value: values[cell],
        })
        .collect();

    let full = SparseObservations::from_entries(n, m, full_entries)?;
    let observed = SparseObservations::from_entries(n, m, observed_entries)?;
    Ok((full, observed))
}

/// Sparse counterpart of [`generate_synthetic`] that never materializes the
/// full matrix: cells are drawn by rejection, values land in `value_range`
/// without the exact-span rescale. Meant for low densities at large scale.
pub fn sparse_uniform(
    n: usize,
    m: usize,
    value_range: (f64, f64),
    density: f64,
    seed: u64,
) -> Result<SparseObservations> {
    let (lo, hi) = value_range;
    if !(hi > lo) {
        return Err(Error::InvalidConfig(format!(
            "value range must be non-degenerate, got [{lo}, {hi}]"
        )));
    }
    let kept = check_density(n, m, density)?;
    let mut rng = crate::stream_rng(seed, "synth-sparse");

    let mut taken: HashSet<u64> = HashSet::with_capacity(kept);
    for (row, col) in coverage_cells(n, m, &mut rng) {
        taken.insert((row * m + col) as u64);
    }
    while taken.len() < kept {
        let cell = rng.random_range(0..(n * m) as u64);
        taken.insert(cell);
    }
    let mut cells: Vec<u64> = taken.into_iter().collect();
    cells.sort_unstable();
    let entries = cells
        .into_iter()
        .map(|cell| Entry {
            row: (cell / m as u64) as usize,
            col: (cell % m as u64) as usize,
            value: rng.random_range(lo..hi),
        })
        .collect();
    SparseObservations::from_entries(n, m, entries)
}

/// Algorithms the variance protocol can run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarianceAlgorithm {
    Mf,
    Nmf,
    /// The bounded trainer in its non-negative variant, with constant
    /// magnitudes covering the generated range.
    MbmfN,
    /// Predicts one constant everywhere; a zero-variance reference.
    Constant(f64),
}

impl VarianceAlgorithm {
    pub fn name(&self) -> String {
        match self {
            VarianceAlgorithm::Mf => "mf".to_string(),
            VarianceAlgorithm::Nmf => "nmf".to_string(),
            VarianceAlgorithm::MbmfN => "mbmf-n".to_string(),
            VarianceAlgorithm::Constant(c) => format!("constant({c})"),
        }
    }
}

/// Per-algorithm stability summary of the variance protocol.
#[derive(Debug, Clone)]
pub struct VarianceReport {
    pub algorithm: String,
    pub k: usize,
    pub ave_sigma: f64,
    pub max_sigma: f64,
    /// Population standard deviation per missing cell.
    pub sigmas: Vec<(usize, usize, f64)>,
    pub repetitions: usize,
}

/// Runs the prediction-variance protocol: generate one synthetic matrix,
/// drop it to the requested density, train each algorithm `repetitions`
/// times from different initializations, and report the per-missing-cell
/// standard deviation of the predictions.
pub fn variance_experiment(
    algorithms: &[VarianceAlgorithm],
    n: usize,
    m: usize,
    value_range: (f64, f64),
    density: f64,
    repetitions: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<VarianceReport>> {
    if repetitions == 0 {
        return Err(Error::InvalidConfig("need at least one repetition".into()));
    }
    let (_, observed) = generate_synthetic(n, m, value_range, density, seed)?;
    let observed_cells: HashSet<(usize, usize)> = observed
        .entries()
        .iter()
        .map(|e| (e.row, e.col))
        .collect();
    let missing: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .filter(|cell| !observed_cells.contains(cell))
        .collect();

    let mut reports = Vec::with_capacity(algorithms.len());
    for algorithm in algorithms {
        let name = algorithm.name();
        let runs: Vec<Result<Vec<f64>>> = (0..repetitions)
            .into_par_iter()
            .map(|rep| {
                let rep_seed = crate::derive_seed(seed, &format!("{name}/rep{rep}"));
                predict_missing(*algorithm, &observed, value_range, k, rep_seed, &missing)
            })
            .collect();
        let runs: Vec<Vec<f64>> = runs.into_iter().collect::<Result<_>>()?;

        let reps = repetitions as f64;
        let mut sigmas = Vec::with_capacity(missing.len());
        let (mut sum_sigma, mut max_sigma) = (0.0f64, 0.0f64);
        for (cell_idx, &(row, col)) in missing.iter().enumerate() {
            let mean = runs.iter().map(|r| r[cell_idx]).sum::<f64>() / reps;
            let var = runs
                .iter()
                .map(|r| {
                    let d = r[cell_idx] - mean;
                    d * d
                })
                .sum::<f64>()
                / reps;
            let sigma = var.sqrt();
            sum_sigma += sigma;
            max_sigma = max_sigma.max(sigma);
            sigmas.push((row, col, sigma));
        }
        reports.push(VarianceReport {
            algorithm: name,
            k,
            ave_sigma: if missing.is_empty() { 0.0 } else { sum_sigma / missing.len() as f64 },
            max_sigma,
            sigmas,
            repetitions,
        });
    }
    Ok(reports)
}

fn predict_missing(
    algorithm: VarianceAlgorithm,
    observed: &SparseObservations,
    value_range: (f64, f64),
    k: usize,
    rep_seed: u64,
    missing: &[(usize, usize)],
) -> Result<Vec<f64>> {
    let cfg = TrainConfig::new(k.max(2)).with_seed(rep_seed);
    match algorithm {
        VarianceAlgorithm::Constant(c) => Ok(vec![c; missing.len()]),
        VarianceAlgorithm::Mf => {
            let (model, _) = train_mf(observed, k, &cfg)?;
            model.predict(missing)
        }
        VarianceAlgorithm::Nmf => {
            let (model, _) = train_nmf(observed, k, &cfg)?;
            model.predict(missing)
        }
        VarianceAlgorithm::MbmfN => {
            let (shifted, record) = shift_nonnegative(observed, value_range.0);
            let bound = value_range.1 - value_range.0.min(0.0);
            let mags = nonneg_range_magnitudes(observed.n_rows(), observed.n_cols(), bound)?;
            let (model, _) = train(&shifted, &mags, &cfg)?;
            predict(&model, Some(&record), missing)
        }
    }
}

/// One row of the accuracy report CSV.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub algorithm: String,
    pub k: usize,
    /// Fold number, or `None` for a per-K average row.
    pub fold: Option<usize>,
    pub report: EvalReport,
}

/// Writes `algorithm,K,fold,rmse,mae,f1` rows; average rows carry `avg` in
/// the fold column.
pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(out, "algorithm,K,fold,rmse,mae,f1").map_err(|e| Error::io(path, e))?;
    for row in rows {
        let fold = row
            .fold
            .map_or_else(|| "avg".to_string(), |f| f.to_string());
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.algorithm, row.k, fold, row.report.rmse, row.report.mae, row.report.f1
        )
        .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Writes `algorithm,K,ave_sigma,max_sigma` rows.
pub fn write_variance_csv(reports: &[VarianceReport], path: &Path) -> Result<()> {
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(out, "algorithm,K,ave_sigma,max_sigma").map_err(|e| Error::io(path, e))?;
    for r in reports {
        writeln!(out, "{},{},{},{}", r.algorithm, r.k, r.ave_sigma, r.max_sigma)
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
