use std::path::PathBuf;

/// Errors produced by data ingestion, preprocessing, training and persistence.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: malformed line: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("{path}:{line}: duplicate (row, col) pair `{pair}`")]
    DuplicateEntry {
        path: PathBuf,
        line: u64,
        pair: String,
    },
    #[error("duplicate entry at (row {row}, col {col})")]
    DuplicatePair { row: usize, col: usize },
    #[error("entry (row {row}, col {col}) out of bounds for a {n_rows}x{n_cols} matrix")]
    EntryOutOfBounds {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("no entries")]
    NoEntries,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("latent dimension must be at least 2 (got {0})")]
    LatentDimensionTooSmall(usize),
    #[error("magnitude vector has non-positive component at index {index}: {value}")]
    NonPositiveMagnitude { index: usize, value: f64 },
    #[error("zero vector has no spherical representation")]
    ZeroVector,
    #[error("value {value} at (row {row}, col {col}) outside declared range [{r_min}, {r_max}]")]
    ValueOutOfRange {
        row: usize,
        col: usize,
        value: f64,
        r_min: f64,
        r_max: f64,
    },
    #[error("historical data is empty; no global statistics available")]
    EmptyHistory,
    #[error("{count} observation(s) contradict the magnitude bounds (first at row {row}, col {col})")]
    MagnitudeContradiction { count: usize, row: usize, col: usize },
    #[error("negative value {value} at (row {row}, col {col}); non-negative input required")]
    NegativeValue { row: usize, col: usize, value: f64 },
    #[error("objective diverged at iteration {iteration} (objective {objective:e})")]
    Diverged {
        iteration: usize,
        objective: f64,
        trace: Box<crate::optimizer::TrainTrace>,
    },
    #[error("requested {requested} disjoint fold entries but only {available} are available")]
    InfeasibleFolds { requested: usize, available: usize },
    #[error("density {density} keeps {kept} entries, too few to cover {n_rows} rows and {n_cols} cols")]
    InfeasibleDensity {
        density: f64,
        kept: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("unknown {kind} label `{label}`")]
    UnknownLabel { kind: &'static str, label: String },
    #[error("{path}:{line}: bad model file: {reason}")]
    ModelFormat {
        path: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
