//! Clustering and normalization primitives: a dense feature matrix, min-max
//! scaling, a KD-tree for radius queries, DBSCAN and K-Means.

mod dbscan;
mod kdtree;
mod kmeans;

use thiserror::Error;

pub use dbscan::{dbscan, dbscan_naive, Dbscan, DbscanParams};
pub use kdtree::KdTree;
pub use kmeans::{kmeans, KMeans, MAX_ITERATIONS};

#[derive(Debug, Error, PartialEq)]
pub enum MatrixError {
    #[error("matrix needs at least one column")]
    NoColumns,
    #[error("row {row} has {found} values, expected {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
}

/// Row-major matrix of finite values, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(cols: usize) -> Result<Self, MatrixError> {
        if cols == 0 {
            return Err(MatrixError::NoColumns);
        }
        Ok(FeatureMatrix { rows: 0, cols, data: Vec::new() })
    }

    pub fn from_rows<R: AsRef<[f64]>>(cols: usize, rows: &[R]) -> Result<Self, MatrixError> {
        let mut m = Self::new(cols)?;
        m.data.reserve(cols * rows.len());
        for r in rows {
            m.push_row(r.as_ref())?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<(), MatrixError> {
        if row.len() != self.cols {
            return Err(MatrixError::Ragged { row: self.rows, found: row.len(), expected: self.cols });
        }
        if let Some(col) = row.iter().position(|v| !v.is_finite()) {
            return Err(MatrixError::NonFinite { row: self.rows, col });
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(j).step_by(self.cols).copied()
    }

    pub fn scale_column(&mut self, j: usize, factor: f64) {
        for v in self.data.iter_mut().skip(j).step_by(self.cols) {
            *v *= factor;
        }
    }
}

/// Squared Euclidean distance, summed in dimension order.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Map each column onto [0, 1]; constant columns become zeros.
pub fn minmax_normalize(m: &FeatureMatrix) -> FeatureMatrix {
    let mut out = m.clone();
    for j in 0..m.cols {
        let (lo, hi) = m.column(j).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        for v in out.data.iter_mut().skip(j).step_by(m.cols) {
            *v = if span > 0.0 { ((*v - lo) / span).clamp(0.0, 1.0) } else { 0.0 };
        }
    }
    out
}
