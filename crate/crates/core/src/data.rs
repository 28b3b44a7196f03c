//! The data matrix with a per-cell missingness mask.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An `n x d` real matrix with a missingness mask and row/column names.
///
/// Missing cells are carried by `missing`; whatever number is stored in
/// `values` at a missing position is never read by any estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    missing: DMatrix<bool>,
    col_names: Vec<String>,
    row_names: Vec<String>,
}

impl DataMatrix {
    /// Fully observed matrix with default names (`V1..Vd`, `1..n`).
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (n, d) = values.shape();
        Self::with_mask(values, DMatrix::from_element(n, d, false))
    }

    pub fn with_mask(values: DMatrix<f64>, missing: DMatrix<bool>) -> Result<Self> {
        let (n, d) = values.shape();
        let cols = (1..=d).map(|j| format!("V{j}")).collect();
        let rows = (1..=n).map(|i| i.to_string()).collect();
        Self::with_names(values, missing, cols, rows)
    }

    pub fn with_names(
        mut values: DMatrix<f64>,
        missing: DMatrix<bool>,
        col_names: Vec<String>,
        row_names: Vec<String>,
    ) -> Result<Self> {
        let (n, d) = values.shape();
        if n == 0 || d == 0 {
            return Err(Error::Empty(format!("data matrix is {n}x{d}")));
        }
        if missing.shape() != (n, d) {
            return Err(Error::Dimension(format!(
                "mask is {:?}, values are {n}x{d}",
                missing.shape()
            )));
        }
        if col_names.len() != d || row_names.len() != n {
            return Err(Error::Dimension(format!(
                "{} column names and {} row names for a {n}x{d} matrix",
                col_names.len(),
                row_names.len()
            )));
        }
        for i in 0..n {
            for j in 0..d {
                if missing[(i, j)] {
                    values[(i, j)] = 0.0;
                } else if !values[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self {
            values,
            missing,
            col_names,
            row_names,
        })
    }

    /// Row-major constructor, `None` marks a missing cell.
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let values = DMatrix::from_fn(n, d, |i, j| rows[i][j].unwrap_or(0.0));
        let missing = DMatrix::from_fn(n, d, |i, j| rows[i][j].is_none());
        Self::with_mask(values, missing)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn missing(&self) -> &DMatrix<bool> {
        &self.missing
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    pub fn row_names(&self) -> &[String] {
        &self.row_names
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        (!self.missing[(i, j)]).then(|| self.values[(i, j)])
    }

    pub fn is_missing(&self, i: usize, j: usize) -> bool {
        self.missing[(i, j)]
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    pub fn n_missing(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    /// Observed values of column `j`, in row order.
    pub fn column_observed(&self, j: usize) -> Vec<f64> {
        (0..self.nrows()).filter_map(|i| self.get(i, j)).collect()
    }

    /// The values as a dense matrix, or an error when any cell is missing.
    pub fn complete(&self) -> Result<&DMatrix<f64>> {
        if let Some(pos) = self.missing.iter().position(|&m| m) {
            let n = self.nrows();
            return Err(Error::InvalidInput(format!(
                "operation requires complete data, cell ({}, {}) is missing",
                pos % n,
                pos / n
            )));
        }
        Ok(&self.values)
    }

    pub fn set_value(&mut self, i: usize, j: usize, v: f64) {
        self.values[(i, j)] = v;
        self.missing[(i, j)] = false;
    }

    pub fn set_missing(&mut self, i: usize, j: usize) {
        self.values[(i, j)] = 0.0;
        self.missing[(i, j)] = true;
    }

    /// Copy of `self` with every cell where `mask` is true marked missing.
    pub fn masked(&self, mask: &DMatrix<bool>) -> Result<Self> {
        if mask.shape() != self.values.shape() {
            return Err(Error::Dimension("mask shape differs from data".into()));
        }
        let mut out = self.clone();
        for i in 0..self.nrows() {
            for j in 0..self.ncols() {
                if mask[(i, j)] {
                    out.set_missing(i, j);
                }
            }
        }
        Ok(out)
    }

    /// Keep only the listed rows.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let d = self.ncols();
        let values = DMatrix::from_fn(rows.len(), d, |i, j| self.values[(rows[i], j)]);
        let missing = DMatrix::from_fn(rows.len(), d, |i, j| self.missing[(rows[i], j)]);
        let names = rows.iter().map(|&i| self.row_names[i].clone()).collect();
        Self::with_names(values, missing, self.col_names.clone(), names)
    }

    pub fn set_col_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.ncols() {
            return Err(Error::Dimension("wrong number of column names".into()));
        }
        self.col_names = names;
        Ok(())
    }

    pub fn set_row_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.nrows() {
            return Err(Error::Dimension("wrong number of row names".into()));
        }
        self.row_names = names;
        Ok(())
    }

    /// Row-major rows with `None` in missing cells.
    pub fn to_rows(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.nrows())
            .map(|i| (0..self.ncols()).map(|j| self.get(i, j)).collect())
            .collect()
    }
}
