//! Preprocessing and magnitude selection.
//!
//! The trainer bounds each predicted cell inside `[-r_w[i]*r_h[j],
//! +r_w[i]*r_h[j]]`, so the data must be shifted to sit inside such a
//! centrosymmetric range (centered variant) or kept non-negative with the
//! bound covering the top of the range (non-negative variant). Three data
//! shapes are handled:
//!
//! * bounded on both sides (`[r_min, r_max]` known): center by the midpoint
//!   or shift by `r_min`, with constant magnitudes from the range width;
//! * bounded on one side (non-negative, no upper bound): magnitudes come
//!   from elsewhere (historical statistics, external files) and centering
//!   subtracts the per-cell bound itself;
//! * unbounded: fall back to the observed min/max.
//!
//! Historical magnitudes blend a row's own mean + standard deviation with
//! the global statistics, weighted by how much history the row has.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::data::SparseObservations;
use crate::error::{Error, Result};
use crate::spherical::MagnitudePair;

/// Which bounding mode a model was trained in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Data centered around zero; products bounded on both sides.
    Centered,
    /// Non-negative data; only the upper bound is meaningful.
    Nonnegative,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Centered => "centered",
            Variant::Nonnegative => "nonnegative",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "c" | "centered" => Ok(Variant::Centered),
            "n" | "nonnegative" => Ok(Variant::Nonnegative),
            other => Err(format!("unknown variant `{other}` (expected c or n)")),
        }
    }
}

/// Bound structure of the raw data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    BoundedBoth,
    BoundedOneSide,
    Unbounded,
}

impl DataType {
    pub fn as_str(self) -> &'static str {
        match self {
            DataType::BoundedBoth => "bounded_both",
            DataType::BoundedOneSide => "bounded_one_side",
            DataType::Unbounded => "unbounded",
        }
    }
}

/// What was subtracted from every observed value, and therefore what must be
/// added back to raw predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OffsetKind {
    /// One scalar for every cell.
    Scalar(f64),
    /// The rank-one bound `r_w[i] * r_h[j]` of the cell itself.
    PerEntryRank1,
}

/// Record of a preprocessing step; stored with the model so predictions can
/// be mapped back to the original scale with exactly the inverse shift.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessRecord {
    pub variant: Variant,
    pub data_type: DataType,
    pub offset: OffsetKind,
    pub r_min: f64,
    pub r_max: f64,
}

/// An observation that cannot sit inside its centered range: `value` exceeds
/// twice the cell bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contradiction {
    pub row: usize,
    pub col: usize,
    pub value: f64,
    /// The cell bound `r_w[row] * r_h[col]` at detection time.
    pub bound: f64,
}

/// How [`center_rank_one`] handles contradicting observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContradictionPolicy {
    /// Drop the contradicting entries as outliers.
    RejectOutlier,
    /// Grow the row magnitude just enough to cover the worst contradiction.
    #[default]
    RaiseMagnitude,
    /// Abort.
    Error,
}

impl std::str::FromStr for ContradictionPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "reject" | "reject_outlier" => Ok(ContradictionPolicy::RejectOutlier),
            "raise" | "raise_magnitude" => Ok(ContradictionPolicy::RaiseMagnitude),
            "error" => Ok(ContradictionPolicy::Error),
            other => Err(format!(
                "unknown contradiction policy `{other}` (expected reject, raise or error)"
            )),
        }
    }
}

/// Centers data with known bounds `[r_min, r_max]` by the range midpoint.
pub fn center_bounded(
    data: &SparseObservations,
    r_min: f64,
    r_max: f64,
) -> Result<(SparseObservations, PreprocessRecord)> {
    if !(r_max > r_min) {
        return Err(Error::InvalidConfig(format!(
            "need r_max > r_min, got [{r_min}, {r_max}]"
        )));
    }
    for e in data.entries() {
        if e.value < r_min || e.value > r_max {
            return Err(Error::ValueOutOfRange {
                row: e.row,
                col: e.col,
                value: e.value,
                r_min,
                r_max,
            });
        }
    }
    let offset = (r_min + r_max) / 2.0;
    let centered = data.map_values(|e| e.value - offset);
    Ok((
        centered,
        PreprocessRecord {
            variant: Variant::Centered,
            data_type: DataType::BoundedBoth,
            offset: OffsetKind::Scalar(offset),
            r_min,
            r_max,
        },
    ))
}

/// Constant magnitudes for centered range-bounded data: every product equals
/// the half-width `(r_max - r_min) / 2`, so the symmetric split is the square
/// root of that.
pub fn centered_range_magnitudes(
    n_rows: usize,
    n_cols: usize,
    r_min: f64,
    r_max: f64,
) -> Result<MagnitudePair> {
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::DimensionMismatch(
            "magnitude vectors need non-empty dimensions".to_string(),
        ));
    }
    if !(r_max > r_min) {
        return Err(Error::InvalidConfig(format!(
            "need r_max > r_min, got [{r_min}, {r_max}]"
        )));
    }
    let half_width = (r_max - r_min) / 2.0;
    let m = half_width.sqrt();
    MagnitudePair::uniform(n_rows, n_cols, m, m)
}

/// Shifts the data non-negative when the lower bound is negative; identity
/// otherwise. Never fails: the offset is simply `min(r_min, 0)`.
pub fn shift_nonnegative(
    data: &SparseObservations,
    r_min: f64,
) -> (SparseObservations, PreprocessRecord) {
    let offset = r_min.min(0.0);
    let shifted = if offset == 0.0 {
        data.clone()
    } else {
        data.map_values(|e| e.value - offset)
    };
    let observed_max = data
        .entries()
        .iter()
        .map(|e| e.value)
        .fold(f64::NEG_INFINITY, f64::max);
    (
        shifted,
        PreprocessRecord {
            variant: Variant::Nonnegative,
            data_type: DataType::BoundedBoth,
            offset: OffsetKind::Scalar(offset),
            r_min,
            r_max: observed_max,
        },
    )
}

/// Constant magnitudes for non-negative data with a known upper bound: every
/// product equals `r_max`.
pub fn nonneg_range_magnitudes(n_rows: usize, n_cols: usize, r_max: f64) -> Result<MagnitudePair> {
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::DimensionMismatch(
            "magnitude vectors need non-empty dimensions".to_string(),
        ));
    }
    if !(r_max > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "need r_max > 0 for the non-negative variant, got {r_max}"
        )));
    }
    let m = r_max.sqrt();
    MagnitudePair::uniform(n_rows, n_cols, m, m)
}

/// Per-row and global mean/standard-deviation statistics of a historical
/// matrix, used to derive magnitudes. Standard deviations use the population
/// formula, so a row with one entry has sd zero.
#[derive(Debug, Clone)]
pub struct HistoricalStats {
    row_mean: Vec<f64>,
    row_sd: Vec<f64>,
    row_count: Vec<usize>,
    global_mean: f64,
    global_sd: f64,
    rho: f64,
}

impl HistoricalStats {
    /// Statistics over the rows of `historical`.
    pub fn from_rows(historical: &SparseObservations, rho: f64) -> Result<Self> {
        Self::build(
            historical.n_rows(),
            historical.entries().iter().map(|e| (e.row, e.value)),
            rho,
        )
    }

    /// Statistics over the columns of `historical` (the item-side analogue).
    pub fn from_cols(historical: &SparseObservations, rho: f64) -> Result<Self> {
        Self::build(
            historical.n_cols(),
            historical.entries().iter().map(|e| (e.col, e.value)),
            rho,
        )
    }

    fn build(n: usize, values: impl Iterator<Item = (usize, f64)>, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rho must lie in (0, 1], got {rho}"
            )));
        }
        let mut sum = vec![0.0; n];
        let mut sum_sq = vec![0.0; n];
        let mut count = vec![0usize; n];
        let (mut g_sum, mut g_sum_sq, mut g_count) = (0.0, 0.0, 0usize);
        for (i, v) in values {
            sum[i] += v;
            sum_sq[i] += v * v;
            count[i] += 1;
            g_sum += v;
            g_sum_sq += v * v;
            g_count += 1;
        }
        if g_count == 0 {
            return Err(Error::EmptyHistory);
        }
        let stat = |s: f64, sq: f64, c: usize| -> (f64, f64) {
            let mean = s / c as f64;
            let var = (sq / c as f64 - mean * mean).max(0.0);
            (mean, var.sqrt())
        };
        let mut row_mean = vec![0.0; n];
        let mut row_sd = vec![0.0; n];
        for i in 0..n {
            if count[i] > 0 {
                let (m, sd) = stat(sum[i], sum_sq[i], count[i]);
                row_mean[i] = m;
                row_sd[i] = sd;
            }
            // Rows without history keep zeroed slots; `row(i)` reports None.
        }
        let (global_mean, global_sd) = stat(g_sum, g_sum_sq, g_count);
        Ok(Self {
            row_mean,
            row_sd,
            row_count: count,
            global_mean,
            global_sd,
            rho,
        })
    }

    pub fn len(&self) -> usize {
        self.row_count.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_count.is_empty()
    }

    /// `(mean, sd, count)` of one row, or `None` without history.
    pub fn row(&self, i: usize) -> Option<(f64, f64, usize)> {
        (self.row_count[i] > 0).then(|| (self.row_mean[i], self.row_sd[i], self.row_count[i]))
    }

    pub fn global(&self) -> (f64, f64) {
        (self.global_mean, self.global_sd)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// Default fraction of the item count a row must have rated for its own
/// history to fully determine its magnitude.
pub const DEFAULT_RHO: f64 = 0.05;

/// Magnitudes from historical statistics: each row blends its own
/// `sqrt(mean + sd)` with the global `sqrt(mean + sd)`, weighted by
/// `w = min(count / (rho * n_items), 1)`; rows without history use the
/// global term alone.
pub fn historical_magnitudes(stats: &HistoricalStats, n_items: usize) -> Result<Vec<f64>> {
    if n_items == 0 {
        return Err(Error::DimensionMismatch(
            "historical magnitudes need a non-empty opposite dimension".to_string(),
        ));
    }
    let (g_mean, g_sd) = stats.global();
    let global_term = (g_mean + g_sd).max(0.0).sqrt();
    let mut out = Vec::with_capacity(stats.len());
    for i in 0..stats.len() {
        let value = match stats.row(i) {
            None => global_term,
            Some((mean, sd, count)) => {
                let own = mean + sd;
                if own < 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "row {i}: historical mean + sd is negative ({own}); \
                         historical magnitudes need non-negative data"
                    )));
                }
                let weight = (count as f64 / (stats.rho() * n_items as f64)).min(1.0);
                weight * own.sqrt() + (1.0 - weight) * global_term
            }
        };
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveMagnitude { index: i, value });
        }
        out.push(value);
    }
    Ok(out)
}

/// Historical magnitudes for both sides: rows from row statistics (weighted
/// against the column count) and columns from the column-wise analogue.
pub fn historical_magnitude_pair(
    historical: &SparseObservations,
    rho: f64,
) -> Result<MagnitudePair> {
    let row_stats = HistoricalStats::from_rows(historical, rho)?;
    let col_stats = HistoricalStats::from_cols(historical, rho)?;
    let r_w = historical_magnitudes(&row_stats, historical.n_cols())?;
    let r_h = historical_magnitudes(&col_stats, historical.n_rows())?;
    MagnitudePair::new(r_w, r_h)
}

/// Centers non-negative data by the per-cell bound `r_w[i] * r_h[j]`.
///
/// A value above twice its bound cannot sit inside the centered range; such
/// contradictions are all reported and handled per policy: dropped, covered
/// by minimally raising the row magnitude until the worst offender satisfies
/// `value = 2 * r_w[i] * r_h[j]`, or turned into an error.
pub fn center_rank_one(
    data: &SparseObservations,
    mags: &MagnitudePair,
    policy: ContradictionPolicy,
) -> Result<(
    SparseObservations,
    MagnitudePair,
    PreprocessRecord,
    Vec<Contradiction>,
)> {
    if mags.n_rows() != data.n_rows() || mags.n_cols() != data.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "magnitudes are {}x{} but data is {}x{}",
            mags.n_rows(),
            mags.n_cols(),
            data.n_rows(),
            data.n_cols()
        )));
    }
    let mut observed_min = f64::INFINITY;
    let mut observed_max = f64::NEG_INFINITY;
    for e in data.entries() {
        if e.value < 0.0 {
            return Err(Error::NegativeValue {
                row: e.row,
                col: e.col,
                value: e.value,
            });
        }
        observed_min = observed_min.min(e.value);
        observed_max = observed_max.max(e.value);
    }

    let contradictions: Vec<Contradiction> = data
        .entries()
        .iter()
        .filter(|e| e.value > 2.0 * mags.bound(e.row, e.col))
        .map(|e| Contradiction {
            row: e.row,
            col: e.col,
            value: e.value,
            bound: mags.bound(e.row, e.col),
        })
        .collect();

    let (kept, mags) = match policy {
        ContradictionPolicy::Error => {
            if let Some(first) = contradictions.first() {
                return Err(Error::MagnitudeContradiction {
                    count: contradictions.len(),
                    row: first.row,
                    col: first.col,
                });
            }
            (data.clone(), mags.clone())
        }
        ContradictionPolicy::RejectOutlier => {
            let drop: std::collections::HashSet<(usize, usize)> =
                contradictions.iter().map(|c| (c.row, c.col)).collect();
            let kept = data.with_same_shape(
                data.entries()
                    .iter()
                    .filter(|e| !drop.contains(&(e.row, e.col)))
                    .copied()
                    .collect(),
            );
            (kept, mags.clone())
        }
        ContradictionPolicy::RaiseMagnitude => {
            let mut r_w = mags.r_w().to_vec();
            for c in &contradictions {
                let needed = c.value / (2.0 * mags.r_h()[c.col]);
                if needed > r_w[c.row] {
                    r_w[c.row] = needed;
                }
            }
            (data.clone(), MagnitudePair::new(r_w, mags.r_h().to_vec())?)
        }
    };

    let centered = kept.map_values(|e| e.value - mags.bound(e.row, e.col));
    Ok((
        centered,
        mags,
        PreprocessRecord {
            variant: Variant::Centered,
            data_type: DataType::BoundedOneSide,
            offset: OffsetKind::PerEntryRank1,
            r_min: observed_min,
            r_max: observed_max,
        },
        contradictions,
    ))
}

/// Observed value range, the fallback bounds for data with none declared.
pub fn observed_bounds(data: &SparseObservations) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::NoEntries);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for e in data.entries() {
        lo = lo.min(e.value);
        hi = hi.max(e.value);
    }
    Ok((lo, hi))
}

/// Writes a `label,magnitude` file.
pub fn save_magnitudes(labels: &[String], values: &[f64], path: &Path) -> Result<()> {
    if labels.len() != values.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} magnitudes",
            labels.len(),
            values.len()
        )));
    }
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for (label, value) in labels.iter().zip(values) {
        writeln!(out, "{label},{value}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Reads a `label,magnitude` file in file order.
pub fn load_magnitudes(path: &Path) -> Result<Vec<(String, f64)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (label, raw) = line.rsplit_once(',').ok_or_else(|| Error::MalformedLine {
            path: path.to_path_buf(),
            line: lineno as u64 + 1,
            reason: "expected `label,magnitude`".to_string(),
        })?;
        let value: f64 = raw.trim().parse().map_err(|_| Error::MalformedLine {
            path: path.to_path_buf(),
            line: lineno as u64 + 1,
            reason: format!("bad magnitude `{raw}`"),
        })?;
        out.push((label.to_string(), value));
    }
    Ok(out)
}

/// Aligns loaded `label,magnitude` pairs with a dataset's label order.
pub fn magnitudes_for_labels(
    loaded: &[(String, f64)],
    labels: &[String],
    kind: &'static str,
) -> Result<Vec<f64>> {
    let by_label: HashMap<&str, f64> = loaded.iter().map(|(l, v)| (l.as_str(), *v)).collect();
    labels
        .iter()
        .map(|label| {
            by_label
                .get(label.as_str())
                .copied()
                .ok_or_else(|| Error::UnknownLabel {
                    kind,
                    label: label.clone(),
                })
        })
        .collect()
}
