//! Vectors, columns, and the repository of target columns.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::metric::Metric;

/// A fixed-dimension vector of finite real coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    coords: Vec<f64>,
}

impl Vector {
    /// Builds a vector, rejecting NaN/infinite coordinates and empty input.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidConfig("vector has no coordinates".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Returns the unit-length vector with the same direction.
    /// Zero vectors cannot be normalized and are rejected.
    pub fn normalized(&self) -> Result<Vector> {
        let n = self.norm();
        if n <= 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(Vector {
            coords: self.coords.iter().map(|c| c / n).collect(),
        })
    }
}

/// Scales a vector to unit Euclidean norm. Errors on the zero vector.
pub fn normalize(v: &Vector) -> Result<Vector> {
    v.normalized()
}

/// Distance between two vectors under the given metric.
pub fn distance(a: &Vector, b: &Vector, metric: &dyn Metric) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(metric.distance(a.coords(), b.coords()))
}

/// Whether `q` matches `x`: distance at most `tau`, boundary inclusive.
pub fn matches(q: &Vector, x: &Vector, metric: &dyn Metric, tau: f64) -> Result<bool> {
    Ok(distance(q, x, metric)? <= tau)
}

/// One table column: an identified multiset of same-dimension vectors.
/// Duplicate vectors are kept and counted as independent records.
#[derive(Debug, Clone)]
pub struct Column {
    pub column_id: String,
    pub table_id: String,
    vectors: Vec<Vector>,
}

impl Column {
    pub fn new(column_id: impl Into<String>, table_id: impl Into<String>, vectors: Vec<Vector>) -> Result<Self> {
        let column_id = column_id.into();
        if vectors.is_empty() {
            return Err(Error::EmptyColumn(column_id));
        }
        let dim = vectors[0].dim();
        for v in &vectors {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.dim(),
                });
            }
        }
        Ok(Self {
            column_id,
            table_id: table_id.into(),
            vectors,
        })
    }

    pub fn vectors(&self) -> &[Vector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].dim()
    }

    /// Returns a copy with every vector unit-normalized.
    pub fn normalized(&self) -> Result<Column> {
        let vectors = self
            .vectors
            .iter()
            .map(|v| v.normalized())
            .collect::<Result<Vec<_>>>()?;
        Ok(Column {
            column_id: self.column_id.clone(),
            table_id: self.table_id.clone(),
            vectors,
        })
    }
}

/// The collection of target columns, all sharing one dimensionality.
#[derive(Debug, Clone)]
pub struct Repository {
    columns: Vec<Column>,
    dim: usize,
    vector_count: usize,
}

impl Repository {
    /// Builds a repository, enforcing unique column ids and a shared
    /// dimensionality across columns.
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::EmptyRepository);
        }
        let dim = columns[0].dim();
        let mut seen = HashSet::new();
        let mut vector_count = 0;
        for c in &columns {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.dim(),
                });
            }
            if !seen.insert(c.column_id.clone()) {
                return Err(Error::DuplicateColumnId(c.column_id.clone()));
            }
            vector_count += c.len();
        }
        Ok(Self {
            columns,
            dim,
            vector_count,
        })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector_count(&self) -> usize {
        self.vector_count
    }

    /// All vectors across all columns, in column order.
    pub fn all_vectors(&self) -> impl Iterator<Item = &Vector> {
        self.columns.iter().flat_map(|c| c.vectors().iter())
    }
}
