use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// An `n × p` table of finite observations, stored row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix<T: Real> {
    rows: Vec<DVector<T>>,
    p: usize,
}

impl<T: Real> DataMatrix<T> {
    pub fn from_rows(rows: Vec<DVector<T>>) -> Result<Self> {
        let p = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.is_empty() || p == 0 {
            return Err(Error::Data("data matrix needs at least one row and one column".into()));
        }
        for (j, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "row {j} has {} columns, expected {p}",
                    r.len()
                )));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("row {j} has a non-finite entry")));
            }
        }
        Ok(DataMatrix { rows, p })
    }

    /// From an `n × p` matrix, one observation per row.
    pub fn from_matrix(m: &DMatrix<T>) -> Result<Self> {
        Self::from_rows(m.row_iter().map(|r| r.transpose()).collect())
    }

    pub fn from_vecs(rows: &[Vec<T>]) -> Result<Self> {
        Self::from_rows(rows.iter().map(|r| DVector::from_column_slice(r)).collect())
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, j: usize) -> &DVector<T> {
        &self.rows[j]
    }

    pub fn rows(&self) -> &[DVector<T>] {
        &self.rows
    }

    pub fn to_matrix(&self) -> DMatrix<T> {
        DMatrix::from_fn(self.n(), self.p, |j, k| self.rows[j][k])
    }

    /// Rows in the given order (duplicates allowed).
    pub fn select(&self, order: &[usize]) -> Self {
        DataMatrix {
            rows: order.iter().map(|&j| self.rows[j].clone()).collect(),
            p: self.p,
        }
    }

    /// Concatenation of two tables with equal width.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if other.p != self.p {
            return Err(Error::DimensionMismatch(format!(
                "cannot stack {} and {} columns",
                self.p, other.p
            )));
        }
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        Ok(DataMatrix { rows, p: self.p })
    }
}
