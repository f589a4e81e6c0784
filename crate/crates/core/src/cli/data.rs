//! CSV ingestion and min-max scaling.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A numeric CSV table with a mandatory header row.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub values: Array2<f64>,
}

impl Table {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn has_columns(&self, names: &[String]) -> bool {
        names.iter().all(|n| self.column_index(n).is_some())
    }

    /// Selected columns in the given order.
    pub fn select(&self, names: &[String]) -> Result<Array2<f64>> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::Data(format!("column '{n}' not found in header {:?}", self.header)))
            })
            .collect::<Result<_>>()?;
        Ok(Array2::from_shape_fn((self.n_rows(), idx.len()), |(i, k)| self.values[[i, idx[k]]]))
    }
}

/// Reads a CSV of finite numbers; bad cells are reported by row and column.
pub fn read_csv(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::Data(format!("{}: missing header row", path.display())));
    }
    let mut flat = Vec::new();
    let mut n = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::Data(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                i + 1,
                record.len(),
                header.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Data(format!(
                    "{}: row {}, column '{}': '{cell}' is not a number",
                    path.display(),
                    i + 1,
                    header[j]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "{}: row {}, column '{}': non-finite value {cell}",
                    path.display(),
                    i + 1,
                    header[j]
                )));
            }
            flat.push(v);
        }
        n += 1;
    }
    let values = Array2::from_shape_vec((n, header.len()), flat).expect("rectangular");
    Ok(Table { header, values })
}

/// Where the data lives and which columns play which role.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub target_columns: Vec<String>,
    pub feature_columns: Vec<String>,
    pub scale_x: bool,
    pub scale_y: bool,
}

impl DatasetSpec {
    /// Resolves feature columns (all non-target columns when none are given)
    /// and checks the two sets are disjoint and present.
    pub fn resolve(table: &Table, targets: &[String], features: &[String], scale_x: bool, scale_y: bool) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Usage("at least one target column is required".into()));
        }
        let feature_columns: Vec<String> = if features.is_empty() {
            table.header.iter().filter(|h| !targets.contains(h)).cloned().collect()
        } else {
            features.to_vec()
        };
        if feature_columns.is_empty() {
            return Err(Error::Data("no feature columns left after removing targets".into()));
        }
        if let Some(c) = feature_columns.iter().find(|c| targets.contains(c)) {
            return Err(Error::Data(format!("column '{c}' is both a feature and a target")));
        }
        for c in targets.iter().chain(&feature_columns) {
            if table.column_index(c).is_none() {
                return Err(Error::Data(format!("column '{c}' not found in header {:?}", table.header)));
            }
        }
        Ok(Self { target_columns: targets.to_vec(), feature_columns, scale_x, scale_y })
    }
}

/// Per-column affine map onto [0, 1]; constant columns keep unit range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit(a: ArrayView2<f64>) -> Result<Self> {
        if a.nrows() == 0 {
            return Err(Error::EmptyInput("cannot fit scaling on zero rows".into()));
        }
        let min = a.columns().into_iter().map(|c| c.fold(f64::INFINITY, |m, v| m.min(*v))).collect();
        let max = a.columns().into_iter().map(|c| c.fold(f64::NEG_INFINITY, |m, v| m.max(*v))).collect();
        Ok(Self { min, max })
    }

    pub fn range(&self, j: usize) -> f64 {
        let r = self.max[j] - self.min[j];
        if r > 0.0 {
            r
        } else {
            1.0
        }
    }

    pub fn apply(&self, a: ArrayView2<f64>) -> Array2<f64> {
        Array2::from_shape_fn(a.dim(), |(i, j)| (a[[i, j]] - self.min[j]) / self.range(j))
    }

    pub fn invert(&self, a: ArrayView2<f64>) -> Array2<f64> {
        Array2::from_shape_fn(a.dim(), |(i, j)| a[[i, j]] * self.range(j) + self.min[j])
    }
}
