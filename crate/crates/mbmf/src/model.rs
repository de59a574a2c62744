//! Versioned text persistence for trained models.
//!
//! The format is line-oriented and diffable: a header, the dimensions, the
//! preprocessing record, then fixed-size sections for the magnitude vectors,
//! the factor matrices and the id labels. Floats are written with 17
//! significant decimal digits, so a load after a save reproduces every value
//! bit for bit.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::magnitudes::{DataType, OffsetKind, PreprocessRecord, Variant};
use crate::spherical::{FactorModel, MagnitudePair};

const MAGIC: &str = "mbmf-model v1";

/// A trained factor model plus everything needed to serve predictions on the
/// original data scale: the preprocessing record and the external id labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub factors: FactorModel,
    pub record: Option<PreprocessRecord>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

impl TrainedModel {
    pub fn new(
        factors: FactorModel,
        record: Option<PreprocessRecord>,
        row_labels: Vec<String>,
        col_labels: Vec<String>,
    ) -> Result<Self> {
        if row_labels.len() != factors.n_rows() || col_labels.len() != factors.n_cols() {
            return Err(Error::DimensionMismatch(format!(
                "{} row labels / {} col labels for a {}x{} model",
                row_labels.len(),
                col_labels.len(),
                factors.n_rows(),
                factors.n_cols()
            )));
        }
        Ok(Self {
            factors,
            record,
            row_labels,
            col_labels,
        })
    }

    /// Label-to-index maps for serving predictions against external ids.
    pub fn label_maps(&self) -> (HashMap<&str, usize>, HashMap<&str, usize>) {
        let rows = self
            .row_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let cols = self
            .col_labels
            .iter()
            .enumerate()
            .map(|(j, l)| (l.as_str(), j))
            .collect();
        (rows, cols)
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn offset_line(offset: &OffsetKind) -> String {
    match offset {
        OffsetKind::Scalar(v) => format!("scalar {}", fmt(*v)),
        OffsetKind::PerEntryRank1 => "rank1".to_string(),
    }
}

/// Saves a model; [`load`] reads it back exactly.
pub fn save(model: &TrainedModel, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);

    let f = &model.factors;
    writeln!(out, "{MAGIC}").map_err(io_err)?;
    writeln!(out, "dims {} {} {}", f.n_rows(), f.n_cols(), f.k()).map_err(io_err)?;
    match &model.record {
        None => writeln!(out, "preprocess none").map_err(io_err)?,
        Some(rec) => writeln!(
            out,
            "preprocess {} {} {} {} {}",
            rec.variant.as_str(),
            rec.data_type.as_str(),
            offset_line(&rec.offset),
            fmt(rec.r_min),
            fmt(rec.r_max),
        )
        .map_err(io_err)?,
    }
    writeln!(out, "r_w").map_err(io_err)?;
    for v in f.magnitudes.r_w() {
        writeln!(out, "{}", fmt(*v)).map_err(io_err)?;
    }
    writeln!(out, "r_h").map_err(io_err)?;
    for v in f.magnitudes.r_h() {
        writeln!(out, "{}", fmt(*v)).map_err(io_err)?;
    }
    writeln!(out, "W").map_err(io_err)?;
    for i in 0..f.n_rows() {
        let row: Vec<String> = f.w.row(i).iter().map(|v| fmt(*v)).collect();
        writeln!(out, "{}", row.join(" ")).map_err(io_err)?;
    }
    writeln!(out, "H").map_err(io_err)?;
    for t in 0..f.k() {
        let row: Vec<String> = f.h.row(t).iter().map(|v| fmt(*v)).collect();
        writeln!(out, "{}", row.join(" ")).map_err(io_err)?;
    }
    writeln!(out, "row_labels").map_err(io_err)?;
    for label in &model.row_labels {
        writeln!(out, "{label}").map_err(io_err)?;
    }
    writeln!(out, "col_labels").map_err(io_err)?;
    for label in &model.col_labels {
        writeln!(out, "{label}").map_err(io_err)?;
    }
    Ok(())
}

struct Lines<'a> {
    path: &'a Path,
    inner: std::io::Lines<BufReader<std::fs::File>>,
    lineno: u64,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<String> {
        self.lineno += 1;
        match self.inner.next() {
            Some(Ok(line)) => Ok(line),
            Some(Err(e)) => Err(Error::io(self.path, e)),
            None => Err(self.bad("unexpected end of file")),
        }
    }

    fn expect(&mut self, keyword: &str) -> Result<()> {
        let line = self.next_line()?;
        if line.trim_end() != keyword {
            return Err(self.bad(format!("expected `{keyword}`, found `{line}`")));
        }
        Ok(())
    }

    fn bad(&self, reason: impl Into<String>) -> Error {
        Error::ModelFormat {
            path: self.path.to_path_buf(),
            line: self.lineno,
            reason: reason.into(),
        }
    }

    fn parse_f64(&self, tok: &str) -> Result<f64> {
        tok.parse()
            .map_err(|_| self.bad(format!("bad float `{tok}`")))
    }
}

fn parse_variant(s: &str) -> Option<Variant> {
    match s {
        "centered" => Some(Variant::Centered),
        "nonnegative" => Some(Variant::Nonnegative),
        _ => None,
    }
}

fn parse_data_type(s: &str) -> Option<DataType> {
    match s {
        "bounded_both" => Some(DataType::BoundedBoth),
        "bounded_one_side" => Some(DataType::BoundedOneSide),
        "unbounded" => Some(DataType::Unbounded),
        _ => None,
    }
}

/// Loads a model saved by [`save`].
pub fn load(path: &Path) -> Result<TrainedModel> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Lines {
        path,
        inner: BufReader::new(file).lines(),
        lineno: 0,
    };

    let header = lines.next_line()?;
    if header.trim_end() != MAGIC {
        return Err(lines.bad(format!("not a model file (header `{header}`)")));
    }

    let dims = lines.next_line()?;
    let toks: Vec<&str> = dims.split_whitespace().collect();
    if toks.len() != 4 || toks[0] != "dims" {
        return Err(lines.bad("expected `dims N M K`"));
    }
    let parse_dim = |l: &Lines, tok: &str| -> Result<usize> {
        tok.parse()
            .map_err(|_| l.bad(format!("bad dimension `{tok}`")))
    };
    let n = parse_dim(&lines, toks[1])?;
    let m = parse_dim(&lines, toks[2])?;
    let k = parse_dim(&lines, toks[3])?;
    if n == 0 || m == 0 || k < 2 {
        return Err(lines.bad(format!("unusable dimensions {n}x{m} at k={k}")));
    }

    let pre = lines.next_line()?;
    let toks: Vec<&str> = pre.split_whitespace().collect();
    let record = match toks.as_slice() {
        ["preprocess", "none"] => None,
        ["preprocess", variant, data_type, "scalar", value, r_min, r_max] => {
            Some(PreprocessRecord {
                variant: parse_variant(variant)
                    .ok_or_else(|| lines.bad(format!("bad variant `{variant}`")))?,
                data_type: parse_data_type(data_type)
                    .ok_or_else(|| lines.bad(format!("bad data type `{data_type}`")))?,
                offset: OffsetKind::Scalar(lines.parse_f64(value)?),
                r_min: lines.parse_f64(r_min)?,
                r_max: lines.parse_f64(r_max)?,
            })
        }
        ["preprocess", variant, data_type, "rank1", r_min, r_max] => Some(PreprocessRecord {
            variant: parse_variant(variant)
                .ok_or_else(|| lines.bad(format!("bad variant `{variant}`")))?,
            data_type: parse_data_type(data_type)
                .ok_or_else(|| lines.bad(format!("bad data type `{data_type}`")))?,
            offset: OffsetKind::PerEntryRank1,
            r_min: lines.parse_f64(r_min)?,
            r_max: lines.parse_f64(r_max)?,
        }),
        _ => return Err(lines.bad("expected a `preprocess` line")),
    };

    let read_vector = |lines: &mut Lines, keyword: &str, len: usize| -> Result<Vec<f64>> {
        lines.expect(keyword)?;
        (0..len)
            .map(|_| {
                let line = lines.next_line()?;
                lines.parse_f64(line.trim())
            })
            .collect()
    };
    let r_w = read_vector(&mut lines, "r_w", n)?;
    let r_h = read_vector(&mut lines, "r_h", m)?;
    let magnitudes = MagnitudePair::new(r_w, r_h)?;

    let read_matrix =
        |lines: &mut Lines, keyword: &str, rows: usize, cols: usize| -> Result<Array2<f64>> {
            lines.expect(keyword)?;
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let line = lines.next_line()?;
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() != cols {
                    return Err(lines.bad(format!(
                        "expected {cols} values in a `{keyword}` row, found {}",
                        toks.len()
                    )));
                }
                for tok in toks {
                    values.push(lines.parse_f64(tok)?);
                }
            }
            Array2::from_shape_vec((rows, cols), values)
                .map_err(|e| lines.bad(format!("bad `{keyword}` shape: {e}")))
        };
    let w = read_matrix(&mut lines, "W", n, k)?;
    let h = read_matrix(&mut lines, "H", k, m)?;

    let read_labels = |lines: &mut Lines, keyword: &str, len: usize| -> Result<Vec<String>> {
        lines.expect(keyword)?;
        (0..len).map(|_| lines.next_line()).collect()
    };
    let row_labels = read_labels(&mut lines, "row_labels", n)?;
    let col_labels = read_labels(&mut lines, "col_labels", m)?;

    TrainedModel::new(FactorModel { w, h, magnitudes }, record, row_labels, col_labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{train, TrainConfig};

    fn trained_model(seed: u64) -> TrainedModel {
        let data = crate::eval::sparse_uniform(6, 5, (0.0, 4.0), 0.6, seed).unwrap();
        let mags = crate::magnitudes::nonneg_range_magnitudes(6, 5, 4.0).unwrap();
        let cfg = TrainConfig {
            max_iters: 25,
            ..TrainConfig::new(3).with_seed(seed)
        };
        let (factors, _) = train(&data, &mags, &cfg).unwrap();
        TrainedModel::new(
            factors,
            Some(PreprocessRecord {
                variant: Variant::Nonnegative,
                data_type: DataType::BoundedBoth,
                offset: OffsetKind::Scalar(0.0),
                r_min: 0.0,
                r_max: 4.0,
            }),
            (0..6).map(|i| format!("user-{i}")).collect(),
            (0..5).map(|j| format!("item {j}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let model = trained_model(3);
        let file = tempfile::NamedTempFile::new().unwrap();
        save(&model, file.path()).unwrap();
        let back = load(file.path()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.factors.w, model.factors.w);
        assert_eq!(back.factors.h, model.factors.h);
    }

    #[test]
    fn round_trip_without_a_preprocess_record() {
        let mut model = trained_model(5);
        model.record = None;
        let file = tempfile::NamedTempFile::new().unwrap();
        save(&model, file.path()).unwrap();
        assert_eq!(load(file.path()).unwrap(), model);
    }

    #[test]
    fn rank_one_offset_round_trips() {
        let mut model = trained_model(7);
        model.record = Some(PreprocessRecord {
            variant: Variant::Centered,
            data_type: DataType::BoundedOneSide,
            offset: OffsetKind::PerEntryRank1,
            r_min: 0.0,
            r_max: 11.5,
        });
        let file = tempfile::NamedTempFile::new().unwrap();
        save(&model, file.path()).unwrap();
        assert_eq!(load(file.path()).unwrap(), model);
    }

    #[test]
    fn garbage_is_rejected_with_a_line_number() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        use std::io::Write;
        writeln!(file, "{MAGIC}").unwrap();
        writeln!(file, "dims 2 2 oops").unwrap();
        match load(file.path()) {
            Err(Error::ModelFormat { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected ModelFormat, got {other:?}"),
        }

        let mut not_a_model = tempfile::NamedTempFile::new().unwrap();
        writeln!(not_a_model, "something else").unwrap();
        assert!(matches!(
            load(not_a_model.path()),
            Err(Error::ModelFormat { line: 1, .. })
        ));
    }

    #[test]
    fn nonpositive_saved_magnitudes_fail_validation() {
        let model = trained_model(9);
        let file = tempfile::NamedTempFile::new().unwrap();
        save(&model, file.path()).unwrap();
        let text = std::fs::read_to_string(file.path()).unwrap();
        let broken = text.replacen(
            &format!("{:.16e}", model.factors.magnitudes.r_w()[0]),
            "0.0",
            1,
        );
        std::fs::write(file.path(), broken).unwrap();
        assert!(load(file.path()).is_err());
    }

    #[test]
    fn label_maps_invert_the_labels() {
        let model = trained_model(11);
        let (rows, cols) = model.label_maps();
        assert_eq!(rows["user-2"], 2);
        assert_eq!(cols["item 4"], 4);
    }
}
