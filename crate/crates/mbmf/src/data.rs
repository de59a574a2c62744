//! Sparse observation data: ingestion, indexing, splitting and persistence.
//!
//! Observations are stored as triplets over dense row/column indices. The
//! implicit indicator matrix `Z` has a one exactly where an entry exists;
//! absent cells are "unknown", never "zero". External string ids are mapped
//! to dense indices in first-seen order and kept so predictions can be
//! reported against the original ids.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// One observed cell of the matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// A sparse observation matrix `V` with its indicator `Z` given implicitly by
/// the set of stored entries. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseObservations {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<Entry>,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
}

impl SparseObservations {
    /// Builds a matrix from triplets, with index-derived labels.
    pub fn from_entries(n_rows: usize, n_cols: usize, entries: Vec<Entry>) -> Result<Self> {
        let row_labels = (0..n_rows).map(|i| i.to_string()).collect();
        let col_labels = (0..n_cols).map(|j| j.to_string()).collect();
        Self::with_labels(n_rows, n_cols, entries, row_labels, col_labels)
    }

    /// Builds a matrix from triplets and explicit labels, validating the
    /// invariants: indices in range, no duplicate (row, col) pair, label
    /// counts matching the dimensions.
    pub fn with_labels(
        n_rows: usize,
        n_cols: usize,
        entries: Vec<Entry>,
        row_labels: Vec<String>,
        col_labels: Vec<String>,
    ) -> Result<Self> {
        if row_labels.len() != n_rows || col_labels.len() != n_cols {
            return Err(Error::DimensionMismatch(format!(
                "{} row labels / {} col labels for a {}x{} matrix",
                row_labels.len(),
                col_labels.len(),
                n_rows,
                n_cols
            )));
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if e.row >= n_rows || e.col >= n_cols {
                return Err(Error::EntryOutOfBounds {
                    row: e.row,
                    col: e.col,
                    n_rows,
                    n_cols,
                });
            }
            if !seen.insert((e.row, e.col)) {
                return Err(Error::DuplicatePair {
                    row: e.row,
                    col: e.col,
                });
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            entries,
            row_labels,
            col_labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    /// Mean of the observed values. `None` when empty.
    pub fn value_mean(&self) -> Option<f64> {
        if self.entries.is_empty() {
            return None;
        }
        Some(self.entries.iter().map(|e| e.value).sum::<f64>() / self.entries.len() as f64)
    }

    /// Number of observed entries per row.
    pub fn row_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_rows];
        for e in &self.entries {
            counts[e.row] += 1;
        }
        counts
    }

    /// Number of observed entries per column.
    pub fn col_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_cols];
        for e in &self.entries {
            counts[e.col] += 1;
        }
        counts
    }

    /// The entries selected by `indices` (positions into `entries()`).
    pub fn entries_at(&self, indices: &[usize]) -> Result<Vec<Entry>> {
        indices
            .iter()
            .map(|&i| {
                self.entries
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::IndexOutOfRange(format!("entry index {i}")))
            })
            .collect()
    }

    /// A copy with the given entry positions removed: the training view when
    /// a validation fold is masked out. Dimensions and labels are kept.
    pub fn without_entries(&self, exclude: &[usize]) -> Self {
        let excluded: HashSet<usize> = exclude.iter().copied().collect();
        let entries = self
            .entries
            .iter()
            .enumerate()
            .filter(|(i, _)| !excluded.contains(i))
            .map(|(_, e)| *e)
            .collect();
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            entries,
            row_labels: self.row_labels.clone(),
            col_labels: self.col_labels.clone(),
        }
    }

    /// A copy with every observed value passed through `f`.
    pub fn map_values(&self, mut f: impl FnMut(&Entry) -> f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| Entry {
                row: e.row,
                col: e.col,
                value: f(e),
            })
            .collect();
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            entries,
            row_labels: self.row_labels.clone(),
            col_labels: self.col_labels.clone(),
        }
    }

    pub(crate) fn with_same_shape(&self, entries: Vec<Entry>) -> Self {
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            entries,
            row_labels: self.row_labels.clone(),
            col_labels: self.col_labels.clone(),
        }
    }
}

/// A historical/present partition of one dataset, plus optional validation
/// folds over the present half (entry positions into `present.entries()`).
#[derive(Debug, Clone)]
pub struct SplitPlan {
    pub historical: SparseObservations,
    pub present: SparseObservations,
    pub folds: Vec<Vec<usize>>,
}

/// How validation folds are drawn from the present data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldMode {
    /// Folds partition a single shuffle; no entry appears in two folds.
    Disjoint,
    /// Each fold is an independent uniform sample; folds may overlap.
    Independent,
}

/// The four logged user behaviors, in increasing order of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    Click,
    Collect,
    Cart,
    Pay,
}

impl Behavior {
    fn index(self) -> usize {
        match self {
            Behavior::Click => 0,
            Behavior::Collect => 1,
            Behavior::Cart => 2,
            Behavior::Pay => 3,
        }
    }
}

impl std::str::FromStr for Behavior {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "click" => Ok(Behavior::Click),
            "collect" => Ok(Behavior::Collect),
            "cart" => Ok(Behavior::Cart),
            "pay" => Ok(Behavior::Pay),
            other => Err(format!(
                "unknown behavior `{other}` (expected click, collect, cart or pay)"
            )),
        }
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Behavior::Click => "click",
            Behavior::Collect => "collect",
            Behavior::Cart => "cart",
            Behavior::Pay => "pay",
        };
        f.write_str(s)
    }
}

/// Raw user behavior records, one per logged event.
#[derive(Debug, Clone, Default)]
pub struct BehaviorLog {
    pub records: Vec<(String, String, Behavior)>,
}

/// Default interest weights for (click, collect, cart, pay).
pub const DEFAULT_BEHAVIOR_WEIGHTS: [f64; 4] = [1.0, 2.0, 3.0, 5.0];

/// Loads a delimiter-separated triplet file into a sparse matrix.
///
/// Each data line carries `user, item, value`; extra fields are ignored.
/// Lines starting with `#` are comments. External ids become dense indices
/// in first-seen order; a repeated (user, item) pair is an error, not a
/// merge.
pub fn load_triplets(path: &Path, delimiter: char, has_header: bool) -> Result<SparseObservations> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .has_headers(has_header)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;

    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut row_labels = Vec::new();
    let mut col_labels = Vec::new();
    let mut entries = Vec::new();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();

    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() < 3 {
            return Err(Error::MalformedLine {
                path: path.to_path_buf(),
                line,
                reason: format!("expected at least 3 fields, found {}", record.len()),
            });
        }
        let user = record.get(0).unwrap_or("");
        let item = record.get(1).unwrap_or("");
        let raw_value = record.get(2).unwrap_or("");
        if user.is_empty() || item.is_empty() {
            return Err(Error::MalformedLine {
                path: path.to_path_buf(),
                line,
                reason: "empty user or item id".to_string(),
            });
        }
        let value: f64 = raw_value.parse().map_err(|_| Error::MalformedLine {
            path: path.to_path_buf(),
            line,
            reason: format!("non-numeric value `{raw_value}`"),
        })?;
        let row = *row_index.entry(user.to_string()).or_insert_with(|| {
            row_labels.push(user.to_string());
            row_labels.len() - 1
        });
        let col = *col_index.entry(item.to_string()).or_insert_with(|| {
            col_labels.push(item.to_string());
            col_labels.len() - 1
        });
        if !seen.insert((row, col)) {
            return Err(Error::DuplicateEntry {
                path: path.to_path_buf(),
                line,
                pair: format!("{user},{item}"),
            });
        }
        entries.push(Entry { row, col, value });
    }

    if entries.is_empty() {
        return Err(Error::NoEntries);
    }
    SparseObservations::with_labels(
        row_labels.len(),
        col_labels.len(),
        entries,
        row_labels,
        col_labels,
    )
}

/// Writes a triplet file that `load_triplets` reads back exactly (values use
/// the shortest decimal form that round-trips in f64).
pub fn save_triplets(
    data: &SparseObservations,
    path: &Path,
    delimiter: char,
    header: bool,
) -> Result<()> {
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    if header {
        writeln!(out, "user{delimiter}item{delimiter}value").map_err(|e| Error::io(path, e))?;
    }
    for e in data.entries() {
        writeln!(
            out,
            "{}{delimiter}{}{delimiter}{}",
            data.row_labels[e.row], data.col_labels[e.col], e.value
        )
        .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Loads a `user,category,behavior` log file.
pub fn load_behavior_log(path: &Path, delimiter: char) -> Result<BehaviorLog> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut records = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() < 3 {
            return Err(Error::MalformedLine {
                path: path.to_path_buf(),
                line,
                reason: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let behavior: Behavior =
            record
                .get(2)
                .unwrap()
                .parse()
                .map_err(|reason| Error::MalformedLine {
                    path: path.to_path_buf(),
                    line,
                    reason,
                })?;
        records.push((
            record.get(0).unwrap().to_string(),
            record.get(1).unwrap().to_string(),
            behavior,
        ));
    }
    Ok(BehaviorLog { records })
}

/// Collapses a behavior log into one interest value per (user, category):
/// the weighted count of each behavior kind. Pairs with no records get no
/// entry at all.
pub fn behaviors_to_interest(log: &BehaviorLog, weights: [f64; 4]) -> Result<SparseObservations> {
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidConfig(
            "behavior weights must be finite and non-negative".to_string(),
        ));
    }
    let mut row_index: HashMap<&str, usize> = HashMap::new();
    let mut col_index: HashMap<&str, usize> = HashMap::new();
    let mut row_labels = Vec::new();
    let mut col_labels = Vec::new();
    let mut pair_order: Vec<(usize, usize)> = Vec::new();
    let mut counts: HashMap<(usize, usize), [u64; 4]> = HashMap::new();

    for (user, category, behavior) in &log.records {
        let row = *row_index.entry(user.as_str()).or_insert_with(|| {
            row_labels.push(user.clone());
            row_labels.len() - 1
        });
        let col = *col_index.entry(category.as_str()).or_insert_with(|| {
            col_labels.push(category.clone());
            col_labels.len() - 1
        });
        let slot = counts.entry((row, col)).or_insert_with(|| {
            pair_order.push((row, col));
            [0; 4]
        });
        slot[behavior.index()] += 1;
    }

    let entries = pair_order
        .iter()
        .map(|&(row, col)| {
            let c = counts[&(row, col)];
            let value = weights
                .iter()
                .zip(c.iter())
                .map(|(w, n)| w * *n as f64)
                .sum();
            Entry { row, col, value }
        })
        .collect();
    SparseObservations::with_labels(
        row_labels.len(),
        col_labels.len(),
        entries,
        row_labels,
        col_labels,
    )
}

/// Splits a dataset into half historical and half present data at random,
/// then repairs the present side so that every row and column that has any
/// entry at all keeps at least one entry in the present half. The historical
/// half may end up with empty rows or columns.
///
/// Repair is deterministic: for each uncovered row (then column, ascending),
/// the historical entry of that row/column with the highest original entry
/// position moves to the present side.
pub fn split_historical_present(data: &SparseObservations, seed: u64) -> Result<SplitPlan> {
    if data.is_empty() {
        return Err(Error::NoEntries);
    }
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut crate::stream_rng(seed, "split"));

    // true = present
    let mut in_present = vec![false; n];
    for &idx in order.iter().skip(n / 2) {
        in_present[idx] = true;
    }

    let mut present_row = vec![0usize; data.n_rows()];
    let mut present_col = vec![0usize; data.n_cols()];
    for (idx, e) in data.entries().iter().enumerate() {
        if in_present[idx] {
            present_row[e.row] += 1;
            present_col[e.col] += 1;
        }
    }

    let move_to_present = |by_row: bool,
                               covered: &mut [usize],
                               other: &mut [usize],
                               in_present: &mut [bool]| {
        for unit in 0..covered.len() {
            if covered[unit] > 0 {
                continue;
            }
            let candidate = data
                .entries()
                .iter()
                .enumerate()
                .filter(|(idx, e)| {
                    !in_present[*idx] && (if by_row { e.row } else { e.col }) == unit
                })
                .map(|(idx, _)| idx)
                .next_back();
            if let Some(idx) = candidate {
                in_present[idx] = true;
                let e = &data.entries()[idx];
                covered[unit] += 1;
                other[if by_row { e.col } else { e.row }] += 1;
            }
            // No candidate means the row/column has no entries at all, which
            // needs no coverage.
        }
    };
    move_to_present(true, &mut present_row, &mut present_col, &mut in_present);
    move_to_present(false, &mut present_col, &mut present_row, &mut in_present);

    let mut historical_entries = Vec::with_capacity(n / 2);
    let mut present_entries = Vec::with_capacity(n - n / 2);
    for (idx, e) in data.entries().iter().enumerate() {
        if in_present[idx] {
            present_entries.push(*e);
        } else {
            historical_entries.push(*e);
        }
    }

    Ok(SplitPlan {
        historical: data.with_same_shape(historical_entries),
        present: data.with_same_shape(present_entries),
        folds: Vec::new(),
    })
}

/// Draws validation folds from the present data. Each fold holds
/// `floor(fraction * len)` entry positions; in [`FoldMode::Disjoint`] the
/// folds partition one shuffle and may not overlap.
pub fn make_validation_folds(
    present: &SparseObservations,
    n_folds: usize,
    fraction: f64,
    seed: u64,
    mode: FoldMode,
) -> Result<Vec<Vec<usize>>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "fold fraction must be in (0, 1), got {fraction}"
        )));
    }
    if n_folds == 0 {
        return Err(Error::InvalidConfig("need at least one fold".to_string()));
    }
    let total = present.len();
    let size = (fraction * total as f64).floor() as usize;
    if size == 0 {
        return Err(Error::InvalidConfig(format!(
            "fold fraction {fraction} of {total} entries gives empty folds"
        )));
    }

    match mode {
        FoldMode::Disjoint => {
            if n_folds * size > total {
                return Err(Error::InfeasibleFolds {
                    requested: n_folds * size,
                    available: total,
                });
            }
            let mut order: Vec<usize> = (0..total).collect();
            use rand::seq::SliceRandom;
            order.shuffle(&mut crate::stream_rng(seed, "folds"));
            Ok((0..n_folds)
                .map(|f| {
                    let mut fold: Vec<usize> = order[f * size..(f + 1) * size].to_vec();
                    fold.sort_unstable();
                    fold
                })
                .collect())
        }
        FoldMode::Independent => Ok((0..n_folds)
            .map(|f| {
                let mut rng = crate::stream_rng(seed, &format!("folds/{f}"));
                let mut fold: Vec<usize> = rand::seq::index::sample(&mut rng, total, size).into_vec();
                fold.sort_unstable();
                fold
            })
            .collect()),
    }
}

/// Writes one fold per line, entry positions comma-separated.
pub fn save_fold_manifest(folds: &[Vec<usize>], path: &Path) -> Result<()> {
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for fold in folds {
        let line = fold
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Reads a fold manifest written by [`save_fold_manifest`].
pub fn load_fold_manifest(path: &Path) -> Result<Vec<Vec<usize>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut folds = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fold: Vec<usize> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse().map_err(|_| Error::MalformedLine {
                    path: path.to_path_buf(),
                    line: lineno as u64 + 1,
                    reason: format!("bad entry index `{tok}`"),
                })
            })
            .collect::<Result<_>>()?;
        folds.push(fold);
    }
    Ok(folds)
}
