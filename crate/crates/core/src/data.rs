//! Datasets, vertical partitions and the synthetic benchmark generator.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Row-major matrix of finite feature values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    names: Vec<String>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let names = (0..cols).map(|j| format!("f{j}")).collect();
        Self::from_rows_named(rows, names)
    }

    pub fn from_rows_named(rows: &[Vec<f64>], names: Vec<String>) -> Result<Self> {
        let cols = names.len();
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::arg(format!(
                    "row {i} has {} values, expected {cols}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::arg(format!("row {i} contains non-finite value {v}")));
            }
            values.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values,
            names,
        })
    }

    pub fn from_columns(columns: &[Vec<f64>], names: Vec<String>) -> Result<Self> {
        if columns.len() != names.len() {
            return Err(Error::arg("column/name count mismatch"));
        }
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::arg("columns differ in length"));
        }
        let row_vecs: Vec<Vec<f64>> = (0..rows)
            .map(|i| columns.iter().map(|c| c[i]).collect())
            .collect();
        Self::from_rows_named(&row_vecs, names)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, col)).collect()
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&c) = cols.iter().find(|&&c| c >= self.cols) {
            return Err(Error::Schema(format!(
                "column {c} out of range ({} columns)",
                self.cols
            )));
        }
        let names = cols.iter().map(|&c| self.names[c].clone()).collect();
        let rows: Vec<Vec<f64>> = (0..self.rows)
            .map(|i| cols.iter().map(|&c| self.get(i, c)).collect())
            .collect();
        Self::from_rows_named(&rows, names)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            values,
            names: self.names.clone(),
        }
    }

    /// Concatenates the columns of `self` and `other` (same row count).
    pub fn hstack(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::arg("row counts differ"));
        }
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        let rows: Vec<Vec<f64>> = (0..self.rows)
            .map(|i| self.row(i).iter().chain(other.row(i)).copied().collect())
            .collect();
        Self::from_rows_named(&rows, names)
    }
}

/// Features plus binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: FeatureMatrix,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(features: FeatureMatrix, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::arg(format!(
                "{} labels for {} rows",
                labels.len(),
                features.rows()
            )));
        }
        if features.rows() < 2 {
            return Err(Error::arg("a dataset needs at least two instances"));
        }
        if let Some(y) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::arg(format!("label {y} is not binary")));
        }
        Ok(Self { features, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u8>) -> Result<Self> {
        Self::new(FeatureMatrix::from_rows(rows)?, labels)
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn d(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn positive_rate(&self) -> f64 {
        self.labels.iter().map(|&y| f64::from(y)).sum::<f64>() / self.n() as f64
    }

    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        Self::new(
            self.features.select_rows(idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// Seed-deterministic stratified holdout; returns `(train, test)` row indices.
    pub fn stratified_split(
        &self,
        test_fraction: f64,
        seed: u64,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::arg("test fraction must lie in [0, 1)"));
        }
        let mut train = Vec::new();
        let mut test = Vec::new();
        for class in 0..=1u8 {
            let mut idx: Vec<usize> = (0..self.n()).filter(|&i| self.labels[i] == class).collect();
            let mut rng = rng::stream(seed, "holdout", &[u64::from(class)]);
            // Fisher-Yates
            for i in (1..idx.len()).rev() {
                let j = rng.random_range(0..=i);
                idx.swap(i, j);
            }
            let n_test = (idx.len() as f64 * test_fraction).round() as usize;
            test.extend_from_slice(&idx[..n_test]);
            train.extend_from_slice(&idx[n_test..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok((train, test))
    }
}

/// Assignment of feature columns to the two parties. Labels always stay with the active party.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerticalSplit {
    pub ap_columns: Vec<usize>,
    pub pp_columns: Vec<usize>,
}

impl VerticalSplit {
    /// First `d_ap` columns to the active party, the rest to the passive party.
    pub fn leading(d_ap: usize, d: usize) -> Self {
        Self {
            ap_columns: (0..d_ap).collect(),
            pp_columns: (d_ap..d).collect(),
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let mut seen = vec![false; d];
        for &c in self.ap_columns.iter().chain(&self.pp_columns) {
            if c >= d {
                return Err(Error::Schema(format!(
                    "column {c} out of range ({d} columns)"
                )));
            }
            if seen[c] {
                return Err(Error::Schema(format!("column {c} assigned twice")));
            }
            seen[c] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Schema(
                "vertical split does not cover every column".into(),
            ));
        }
        Ok(())
    }

    /// Returns the active party's labelled partition and the passive party's features.
    pub fn apply(&self, data: &Dataset) -> Result<(Dataset, FeatureMatrix)> {
        self.validate(data.d())?;
        let ap = Dataset::new(
            data.features().select_columns(&self.ap_columns)?,
            data.labels().to_vec(),
        )?;
        let pp = data.features().select_columns(&self.pp_columns)?;
        Ok((ap, pp))
    }

    /// Dataset with AP columns first, then PP columns: the centralized view that
    /// shares tie-break order with the two-party trainer.
    pub fn merged(&self, data: &Dataset) -> Result<Dataset> {
        let (ap, pp) = self.apply(data)?;
        Dataset::new(ap.features().hstack(&pp)?, ap.labels().to_vec())
    }
}

/// Reads a headered CSV. Columns whose first cell parses as a number are numeric;
/// the others are integer-encoded by first appearance.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(file, label_column)
}

pub fn load_csv_reader<R: std::io::Read>(reader: R, label_column: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Schema(format!("label column '{label_column}' not found")))?;

    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != label_idx).collect();

    enum Kind {
        Numeric,
        Categorical(HashMap<String, usize>),
    }
    let mut kinds: Vec<Kind> = feature_cols
        .iter()
        .map(|&c| match records.first().map(|r| r[c].parse::<f64>()) {
            Some(Ok(_)) | None => Kind::Numeric,
            Some(Err(_)) => Kind::Categorical(HashMap::new()),
        })
        .collect();

    let mut rows = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for (r, rec) in records.iter().enumerate() {
        let line = r + 2;
        if rec.len() != headers.len() {
            return Err(Error::Row {
                line,
                message: format!("expected {} cells, found {}", headers.len(), rec.len()),
            });
        }
        let label = match rec[label_idx].parse::<f64>() {
            Ok(0.0) => 0,
            Ok(1.0) => 1,
            _ => {
                return Err(Error::Schema(format!(
                    "line {line}: label '{}' is not 0 or 1",
                    &rec[label_idx]
                )))
            }
        };
        labels.push(label);
        let mut row = Vec::with_capacity(feature_cols.len());
        for (k, &c) in feature_cols.iter().enumerate() {
            let cell = &rec[c];
            let v = match &mut kinds[k] {
                Kind::Numeric => match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => v,
                    _ => {
                        return Err(Error::Row {
                            line,
                            message: format!(
                                "column '{}': cannot parse '{cell}' as a finite number",
                                headers[c]
                            ),
                        })
                    }
                },
                Kind::Categorical(codes) => {
                    let next = codes.len();
                    *codes.entry(cell.to_owned()).or_insert(next) as f64
                }
            };
            row.push(v);
        }
        rows.push(row);
    }
    let names = feature_cols.iter().map(|&c| headers[c].clone()).collect();
    Dataset::new(FeatureMatrix::from_rows_named(&rows, names)?, labels)
}

/// Parameters of the synthetic two-party benchmark.
/// Writes `data` with its feature names as the header and a trailing `label` column.
pub fn write_csv<W: std::io::Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = data.features().names().iter().map(String::as_str).collect();
    header.push("label");
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut row: Vec<String> = data.features().row(i).iter().map(f64::to_string).collect();
        row.push(data.labels()[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d_ap: usize,
    pub d_pp: usize,
    /// Positive-class proportion.
    pub balance: f64,
    /// Label flip probability.
    pub label_noise: f64,
    pub seed: u64,
}

/// Mahalanobis distance between the two class means.
const CLASS_SEPARATION: f64 = 5.0;

/// Draws Gaussian class-conditional features whose mean shift points along
/// a direction spread evenly over every AP and PP column, then flips labels.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n < 10 {
        return Err(Error::arg("synthetic datasets need n >= 10"));
    }
    if !(spec.balance > 0.0 && spec.balance < 1.0) {
        return Err(Error::arg(format!(
            "class balance {} not in (0, 1)",
            spec.balance
        )));
    }
    if !(0.0..=1.0).contains(&spec.label_noise) {
        return Err(Error::arg("label noise must lie in [0, 1]"));
    }
    let d = spec.d_ap + spec.d_pp;
    if d == 0 {
        return Err(Error::arg("at least one feature column is required"));
    }
    let shift = 0.5 * CLASS_SEPARATION / (d as f64).sqrt();
    let mut rng = rng::stream(spec.seed, "synthetic", &[]);
    let mut rows = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let y = u8::from(rng.random::<f64>() < spec.balance);
        let sign = if y == 1 { 1.0 } else { -1.0 };
        let row = (0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z + sign * shift
            })
            .collect();
        rows.push(row);
        let flip = rng.random::<f64>() < spec.label_noise;
        labels.push(if flip { 1 - y } else { y });
    }
    let names = (0..spec.d_ap)
        .map(|j| format!("ap{j}"))
        .chain((0..spec.d_pp).map(|j| format!("pp{j}")))
        .collect();
    Dataset::new(FeatureMatrix::from_rows_named(&rows, names)?, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_toy_and_categorical_encoding() {
        let text = "age,city,income,label\n30,a,1.5,1\n40,b,2.5,0\n50,a,3.5,1\n";
        let ds = load_csv_reader(text.as_bytes(), "label").unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 3));
        assert_eq!(ds.features().column(1), vec![0.0, 1.0, 0.0]);
        assert_eq!(ds.labels(), &[1, 0, 1]);
        assert_eq!(ds.features().names(), &["age", "city", "income"]);
    }

    #[test]
    fn csv_three_row_toy() {
        let text = "age,income,label\n1,2,0\n3,4,1\n5,6,0\n";
        let ds = load_csv_reader(text.as_bytes(), "label").unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 2));
    }

    #[test]
    fn csv_rejects_non_binary_label() {
        let text = "age,label\n1,0\n2,2\n";
        assert!(matches!(
            load_csv_reader(text.as_bytes(), "label"),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn csv_missing_label_column() {
        let text = "age,y\n1,0\n2,1\n";
        assert!(matches!(
            load_csv_reader(text.as_bytes(), "label"),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn csv_reports_line_of_bad_cell() {
        let text = "age,label\n1,0\n2,1\nx,1\n";
        match load_csv_reader(text.as_bytes(), "label") {
            Err(Error::Row { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn synthetic_balance_and_determinism() {
        let spec = SyntheticSpec {
            n: 10_000,
            d_ap: 2,
            d_pp: 2,
            balance: 0.07,
            label_noise: 0.0,
            seed: 3,
        };
        let a = gen_synthetic(&spec).unwrap();
        assert!((a.positive_rate() - 0.07).abs() < 0.02);
        let b = gen_synthetic(&spec).unwrap();
        assert_eq!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap()
        );
    }

    #[test]
    fn csv_write_round_trips() {
        let spec = SyntheticSpec {
            n: 50,
            d_ap: 2,
            d_pp: 1,
            balance: 0.5,
            label_noise: 0.1,
            seed: 4,
        };
        let ds = gen_synthetic(&spec).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        assert_eq!(load_csv_reader(&buf[..], "label").unwrap(), ds);
    }

    #[test]
    fn synthetic_rejects_bad_balance() {
        let spec = SyntheticSpec {
            n: 100,
            d_ap: 1,
            d_pp: 1,
            balance: 1.0,
            label_noise: 0.0,
            seed: 0,
        };
        assert!(gen_synthetic(&spec).is_err());
    }

    #[test]
    fn holdout_is_disjoint_and_stratified() {
        let spec = SyntheticSpec {
            n: 1000,
            d_ap: 1,
            d_pp: 1,
            balance: 0.3,
            label_noise: 0.0,
            seed: 1,
        };
        let ds = gen_synthetic(&spec).unwrap();
        let (train, test) = ds.stratified_split(0.2, 9).unwrap();
        assert_eq!(train.len() + test.len(), 1000);
        assert!(train.iter().all(|i| test.binary_search(i).is_err()));
        let test_rate =
            test.iter().filter(|&&i| ds.labels()[i] == 1).count() as f64 / test.len() as f64;
        assert!((test_rate - ds.positive_rate()).abs() < 0.01);
        assert_eq!(ds.stratified_split(0.2, 9).unwrap(), (train, test));
    }

    #[test]
    fn vertical_split_must_cover_columns() {
        let s = VerticalSplit {
            ap_columns: vec![0],
            pp_columns: vec![2],
        };
        assert!(s.validate(3).is_err());
        let s = VerticalSplit {
            ap_columns: vec![0, 1],
            pp_columns: vec![1, 2],
        };
        assert!(s.validate(3).is_err());
        assert!(VerticalSplit::leading(1, 3).validate(3).is_ok());
    }
}
