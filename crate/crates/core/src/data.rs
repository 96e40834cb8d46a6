//! Samples, CSV I/O and empirical marginals.
//!
//! A [`Dataset`] holds `N` rows of `(x, a, y)` with `x` a real feature vector,
//! `a` the binary sensitive attribute and `y` the binary label. Features are
//! stored row-major so that a sample's features are a contiguous slice.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset is empty")]
    Empty,
    #[error("dataset has no feature columns")]
    NoFeatures,
    #[error("row {row} has {found} features, expected {expected}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("{what} has length {found}, expected {expected}")]
    LengthMismatch { what: &'static str, expected: usize, found: usize },
    #[error("{column} value {value} at row {row} is not 0 or 1")]
    NotBinary { column: &'static str, row: usize, value: String },
    #[error("non-finite feature at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("missing value at row {row}, column `{column}`")]
    MissingValue { row: usize, column: String },
    #[error("cannot parse `{value}` at row {row}, column `{column}` as a number")]
    Parse { row: usize, column: String, value: String },
    #[error("bad header: {0}")]
    Header(String),
    #[error("cell (a={a}, y={y}) has no samples")]
    EmptyCell { a: u8, y: u8 },
    #[error("fraction {0} is outside (0, 1)")]
    BadFraction(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One of the four `(sensitive, label)` combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub a: u8,
    pub y: u8,
}

impl Cell {
    pub const ALL: [Cell; 4] = [
        Cell { a: 0, y: 0 },
        Cell { a: 0, y: 1 },
        Cell { a: 1, y: 0 },
        Cell { a: 1, y: 1 },
    ];

    pub fn new(a: u8, y: u8) -> Self {
        debug_assert!(a <= 1 && y <= 1);
        Self { a, y }
    }

    /// Position in [`Cell::ALL`].
    pub fn index(self) -> usize {
        2 * self.a as usize + self.y as usize
    }
}

/// Labelled samples with a binary sensitive attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    sensitive: Vec<u8>,
    labels: Vec<u8>,
}

impl Dataset {
    /// Builds a dataset from per-sample feature rows.
    pub fn new(rows: Vec<Vec<f64>>, sensitive: Vec<u8>, labels: Vec<u8>) -> Result<Self, DataError> {
        let dim = rows.first().map(Vec::len).ok_or(DataError::Empty)?;
        let mut features = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(DataError::RaggedRow {
                    row: i,
                    expected: dim,
                    found: row.len(),
                });
            }
            features.extend_from_slice(row);
        }
        Self::from_flat(features, dim, sensitive, labels)
    }

    /// Builds a dataset from row-major features.
    pub fn from_flat(
        features: Vec<f64>,
        dim: usize,
        sensitive: Vec<u8>,
        labels: Vec<u8>,
    ) -> Result<Self, DataError> {
        if dim == 0 {
            return Err(DataError::NoFeatures);
        }
        let n = sensitive.len();
        if n == 0 {
            return Err(DataError::Empty);
        }
        if labels.len() != n {
            return Err(DataError::LengthMismatch {
                what: "labels",
                expected: n,
                found: labels.len(),
            });
        }
        if features.len() != n * dim {
            return Err(DataError::LengthMismatch {
                what: "features",
                expected: n * dim,
                found: features.len(),
            });
        }
        for (column, values) in [("sensitive", &sensitive), ("label", &labels)] {
            if let Some(row) = values.iter().position(|&v| v > 1) {
                return Err(DataError::NotBinary {
                    column,
                    row,
                    value: values[row].to_string(),
                });
            }
        }
        if let Some(k) = features.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                row: k / dim,
                column: k % dim,
            });
        }
        Ok(Self {
            features,
            dim,
            sensitive,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of features `p`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.dim)
    }

    pub fn sensitive(&self) -> &[u8] {
        &self.sensitive
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn cell(&self, i: usize) -> Cell {
        Cell::new(self.sensitive[i], self.labels[i])
    }

    /// Indices of the samples in `cell`, in order.
    pub fn cell_indices(&self, cell: Cell) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.cell(i) == cell).collect()
    }

    pub fn marginal_stats(&self) -> MarginalStats {
        MarginalStats::from_dataset(self)
    }

    /// Samples at `indices`, in the given order (repeats allowed).
    pub fn subset(&self, indices: &[usize]) -> Result<Self, DataError> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self::from_flat(
            features,
            self.dim,
            indices.iter().map(|&i| self.sensitive[i]).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// Concatenates two datasets with the same feature dimension.
    pub fn concat(&self, other: &Dataset) -> Result<Self, DataError> {
        if other.dim != self.dim {
            return Err(DataError::RaggedRow {
                row: self.len(),
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut out = self.clone();
        out.features.extend_from_slice(&other.features);
        out.sensitive.extend_from_slice(&other.sensitive);
        out.labels.extend_from_slice(&other.labels);
        Ok(out)
    }

    /// Appends a constant feature equal to 1, giving linear models an intercept.
    pub fn with_intercept(&self) -> Self {
        let mut features = Vec::with_capacity(self.len() * (self.dim + 1));
        for row in self.rows() {
            features.extend_from_slice(row);
            features.push(1.0);
        }
        Self {
            features,
            dim: self.dim + 1,
            sensitive: self.sensitive.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Column means and standard deviations of this dataset.
    pub fn fit_standardization(&self) -> Standardization {
        let n = self.len() as f64;
        let mut mean = vec![0.0; self.dim];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; self.dim];
        for row in self.rows() {
            for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        Standardization { mean, scale }
    }

    pub fn standardized(&self, st: &Standardization) -> Self {
        let mut out = self.clone();
        for row in out.features.chunks_exact_mut(self.dim) {
            for ((v, m), s) in row.iter_mut().zip(&st.mean).zip(&st.scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    /// Reads the CSV schema `f1..fp, sensitive, label` with a header row.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let ncols = headers.len();
        if ncols < 3 {
            return Err(DataError::Header(format!(
                "expected at least one feature column plus `sensitive` and `label`, found {ncols} columns"
            )));
        }
        if &headers[ncols - 2] != "sensitive" || &headers[ncols - 1] != "label" {
            return Err(DataError::Header(format!(
                "last two columns must be `sensitive` and `label`, found `{}` and `{}`",
                &headers[ncols - 2],
                &headers[ncols - 1]
            )));
        }
        let dim = ncols - 2;
        let mut features = Vec::new();
        let mut sensitive = Vec::new();
        let mut labels = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            for (col, field) in record.iter().enumerate() {
                let column = || headers.get(col).unwrap_or("?").to_string();
                if field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan") {
                    return Err(DataError::MissingValue { row, column: column() });
                }
                if col < dim {
                    let v: f64 = field.parse().map_err(|_| DataError::Parse {
                        row,
                        column: column(),
                        value: field.to_string(),
                    })?;
                    features.push(v);
                } else {
                    let target = if col == dim { &mut sensitive } else { &mut labels };
                    let name = if col == dim { "sensitive" } else { "label" };
                    let v = parse_binary(field).ok_or_else(|| DataError::NotBinary {
                        column: name,
                        row,
                        value: field.to_string(),
                    })?;
                    target.push(v);
                }
            }
        }
        Self::from_flat(features, dim, sensitive, labels)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    /// Writes the CSV schema read by [`Dataset::from_csv_reader`]. Floats use the
    /// shortest representation that round-trips, so output is deterministic.
    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dim).map(|j| format!("f{j}")).collect();
        header.push("sensitive".into());
        header.push("label".into());
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(self.sensitive[i].to_string());
            rec.push(self.labels[i].to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_path(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let file = std::fs::File::create(path)?;
        self.to_csv_writer(std::io::BufWriter::new(file))
    }
}

fn parse_binary(field: &str) -> Option<u8> {
    match field {
        "0" | "0.0" => Some(0),
        "1" | "1.0" => Some(1),
        _ => None,
    }
}

/// Per-feature affine rescaling `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Empirical `(A, Y)` marginal computed from integer counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarginalStats {
    /// `counts[a][y]`
    pub counts: [[usize; 2]; 2],
    pub n: usize,
}

impl MarginalStats {
    pub fn from_dataset(data: &Dataset) -> Self {
        let mut counts = [[0usize; 2]; 2];
        for (&a, &y) in data.sensitive.iter().zip(&data.labels) {
            counts[a as usize][y as usize] += 1;
        }
        Self { counts, n: data.len() }
    }

    pub fn count(&self, cell: Cell) -> usize {
        self.counts[cell.a as usize][cell.y as usize]
    }

    /// `p_ay = count(a, y) / N`.
    pub fn p_hat(&self, a: u8, y: u8) -> f64 {
        self.counts[a as usize][y as usize] as f64 / self.n as f64
    }

    /// Probabilities in [`Cell::ALL`] order.
    pub fn p_hat_cells(&self) -> [f64; 4] {
        Cell::ALL.map(|c| self.p_hat(c.a, c.y))
    }

    /// `r_a = N / count(a, 1)`, the inverse of `p_a1`; `None` if group `a` has no positives.
    pub fn r(&self, a: u8) -> Option<f64> {
        let c = self.counts[a as usize][1];
        (c > 0).then(|| self.n as f64 / c as f64)
    }

    /// Largest admissible unfairness penalty, `min(p_11, p_01)`.
    pub fn max_eta(&self) -> f64 {
        self.p_hat(1, 1).min(self.p_hat(0, 1))
    }

    /// Returns the first empty cell, if any.
    pub fn first_empty_cell(&self) -> Option<Cell> {
        Cell::ALL.into_iter().find(|&c| self.count(c) == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new(
            vec![vec![0.5, 1.0], vec![-1.0, 2.0], vec![3.0, 0.0], vec![0.0, 0.0], vec![1.5, -2.0]],
            vec![1, 1, 0, 0, 1],
            vec![1, 0, 1, 0, 1],
        )
        .unwrap()
    }

    #[test]
    fn marginals_from_counts() {
        let s = toy().marginal_stats();
        assert_eq!(s.counts, [[1, 1], [1, 2]]);
        let total: f64 = s.p_hat_cells().iter().sum();
        assert_eq!(total, 1.0);
        assert_eq!(s.r(1), Some(2.5));
        assert_eq!(s.r(0), Some(5.0));
        assert_eq!(s.max_eta(), 0.2);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(Dataset::new(vec![], vec![], vec![]), Err(DataError::Empty)));
        assert!(matches!(
            Dataset::new(vec![vec![1.0]], vec![2], vec![0]),
            Err(DataError::NotBinary { column: "sensitive", .. })
        ));
        assert!(matches!(
            Dataset::new(vec![vec![f64::NAN]], vec![0], vec![0]),
            Err(DataError::NonFinite { row: 0, column: 0 })
        ));
        assert!(matches!(
            Dataset::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0, 0], vec![0, 0]),
            Err(DataError::RaggedRow { row: 1, .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let d = toy();
        let mut buf = Vec::new();
        d.to_csv_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("f1,f2,sensitive,label\n"));
        let back = Dataset::from_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn csv_rejects_missing_values() {
        let text = "f1,sensitive,label\n1.0,0,1\n,1,0\n";
        let err = Dataset::from_csv_reader(text.as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::MissingValue { row: 1, .. }), "{err}");
        let text = "f1,label,sensitive\n1.0,0,1\n";
        assert!(matches!(Dataset::from_csv_reader(text.as_bytes()), Err(DataError::Header(_))));
        let text = "f1,sensitive,label\nabc,0,1\n";
        assert!(matches!(Dataset::from_csv_reader(text.as_bytes()), Err(DataError::Parse { .. })));
    }

    #[test]
    fn intercept_and_standardization() {
        let d = toy();
        let di = d.with_intercept();
        assert_eq!(di.dim(), 3);
        assert_eq!(di.row(2), &[3.0, 0.0, 1.0]);
        let st = d.fit_standardization();
        let ds = d.standardized(&st);
        let again = ds.fit_standardization();
        for j in 0..2 {
            assert!(again.mean[j].abs() < 1e-12);
            assert!((again.scale[j] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn subsets_and_cells() {
        let d = toy();
        assert_eq!(d.cell_indices(Cell::new(1, 1)), vec![0, 4]);
        let s = d.subset(&[4, 0]).unwrap();
        assert_eq!(s.row(0), d.row(4));
        assert_eq!(s.labels(), &[1, 1]);
        assert_eq!(d.concat(&s).unwrap().len(), 7);
    }
}
