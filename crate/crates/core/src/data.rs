//! Pima Indians Diabetes records: CSV ingestion, column statistics and the
//! seeded holdout split.
//!
//! Features are kept exactly as read. Zeros that are physiologically
//! impossible (blood pressure, BMI, ...) stay in place; there is no
//! normalization or imputation anywhere in this module.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng, Vector};

pub const N_FEATURES: usize = 8;

/// Attribute names in file order.
pub const COLUMN_NAMES: [&str; N_FEATURES] = [
    "pregnancies",
    "plasma_glucose",
    "diastolic_bp",
    "triceps_skinfold",
    "serum_insulin",
    "bmi",
    "diabetes_pedigree",
    "age",
];

/// An `n × 8` feature matrix with one 0/1 label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vector,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vector) -> Result<Self> {
        if features.cols() != N_FEATURES {
            return Err(Error::shape(
                "dataset",
                features.shape(),
                format!("{N_FEATURES} feature columns"),
            ));
        }
        if features.rows() != labels.len() {
            return Err(Error::shape(
                "dataset",
                features.shape(),
                format!("{} labels", labels.len()),
            ));
        }
        for i in 0..features.rows() {
            check_record(i + 1, features.row(i), labels[i])?;
        }
        Ok(Self { features, labels })
    }

    pub fn from_rows(rows: &[[f64; N_FEATURES]], labels: &[f64]) -> Result<Self> {
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(
            Matrix::new(rows.len(), N_FEATURES, data)?,
            Vector::new(labels.to_vec()),
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &Vector {
        &self.labels
    }

    pub fn column_names(&self) -> &'static [&'static str; N_FEATURES] {
        &COLUMN_NAMES
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1.0).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    /// The rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut data = Vec::with_capacity(indices.len() * N_FEATURES);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.row(i));
            labels.push(self.label(i));
        }
        Dataset {
            features: Matrix::new(indices.len(), N_FEATURES, data).expect("row width is fixed"),
            labels: Vector::new(labels),
        }
    }
}

fn check_record(line: usize, features: &[f64], label: f64) -> Result<()> {
    if label != 0.0 && label != 1.0 {
        return Err(Error::Schema {
            line,
            message: format!("label must be 0 or 1, found {label}"),
        });
    }
    if let Some((j, v)) = features
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(Error::Schema {
            line,
            message: format!("field {} must be finite and nonnegative, found {v}", j + 1),
        });
    }
    Ok(())
}

/// Reads a PID CSV file. See [`parse_pid`].
pub fn load_pid(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pid(&text)
}

/// Parses nine comma-separated numeric fields per line (eight features, then
/// the 0/1 label). A first line whose first field is not numeric is taken as
/// a header and skipped; blank lines are ignored. Line numbers in errors are
/// 1-based and count every physical line.
pub fn parse_pid(text: &str) -> Result<Dataset> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut seen_content = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let first_line = !seen_content;
        seen_content = true;
        if first_line && fields[0].parse::<f64>().is_err() {
            continue;
        }
        if fields.len() != N_FEATURES + 1 {
            return Err(Error::Schema {
                line: line_no,
                message: format!("expected {} fields, found {}", N_FEATURES + 1, fields.len()),
            });
        }
        let mut values = [0.0; N_FEATURES + 1];
        for (j, field) in fields.iter().enumerate() {
            values[j] = field.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                field: j + 1,
                value: field.to_string(),
            })?;
        }
        check_record(line_no, &values[..N_FEATURES], values[N_FEATURES])?;
        data.extend_from_slice(&values[..N_FEATURES]);
        labels.push(values[N_FEATURES]);
    }
    if labels.is_empty() {
        return Err(Error::Schema {
            line: 0,
            message: "no records found".to_string(),
        });
    }
    Ok(Dataset {
        features: Matrix::new(labels.len(), N_FEATURES, data)?,
        labels: Vector::new(labels),
    })
}

/// Population statistics of one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats {
    pub mean: f64,
    /// Population standard deviation (variance divided by n).
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

pub fn column_stats(d: &Dataset) -> Result<Vec<ColumnStats>> {
    if d.is_empty() {
        return Err(Error::param("column statistics need at least one row"));
    }
    let n = d.len() as f64;
    Ok((0..N_FEATURES)
        .map(|j| {
            let col = (0..d.len()).map(|i| d.features.get(i, j));
            let mean = col.clone().sum::<f64>() / n;
            let var = col.clone().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let (min, max) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
            // Summation rounding can push the mean of a constant column past its extremes.
            ColumnStats {
                mean: mean.clamp(min, max),
                std: var.sqrt(),
                min,
                max,
            }
        })
        .collect())
}

/// How to carve a validation holdout out of a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub validation_fraction: f64,
    pub seed: u64,
    /// Keep the class ratio of the validation part close to the full set.
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            validation_fraction: 0.1,
            seed: 0,
            stratified: false,
        }
    }
}

impl SplitSpec {
    pub fn validation_size(&self, n_rows: usize) -> Result<usize> {
        let f = self.validation_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::param(format!(
                "validation fraction must lie in (0, 1), got {f}"
            )));
        }
        let k = (n_rows as f64 * f).round() as usize;
        if k < 1 || k >= n_rows {
            return Err(Error::param(format!(
                "validation fraction {f} of {n_rows} rows gives {k} validation rows; need between 1 and {}",
                n_rows.saturating_sub(1)
            )));
        }
        Ok(k)
    }

    /// Row indices `(train, validation)` of the split.
    pub fn indices(&self, d: &Dataset) -> Result<(Vec<usize>, Vec<usize>)> {
        let n = d.len();
        let k = self.validation_size(n)?;
        let mut order: Vec<usize> = (0..n).collect();
        Rng::new(self.seed).shuffle(&mut order);
        if !self.stratified {
            let train = order[..n - k].to_vec();
            return Ok((train, order[n - k..].to_vec()));
        }

        // Walk the permutation from the back, filling per-class validation quotas.
        let pos_quota = (k as f64 * d.positives() as f64 / n as f64).round() as usize;
        let mut quota = [k - pos_quota, pos_quota];
        let mut is_val = vec![false; n];
        for &i in order.iter().rev() {
            let class = d.label(i) as usize;
            if quota[class] > 0 {
                quota[class] -= 1;
                is_val[i] = true;
            }
        }
        let (mut train, mut val) = (Vec::with_capacity(n - k), Vec::with_capacity(k));
        for &i in &order {
            if is_val[i] {
                val.push(i);
            } else {
                train.push(i);
            }
        }
        Ok((train, val))
    }
}

/// Seeded shuffle, then the last `round(n × fraction)` rows become validation.
pub fn split(d: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, val) = spec.indices(d)?;
    Ok((d.subset(&train), d.subset(&val)))
}
