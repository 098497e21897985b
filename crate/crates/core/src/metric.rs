//! Distance functions over vector coordinates.
//!
//! A [`Metric`] must satisfy the metric axioms (non-negativity, identity of
//! indiscernibles, symmetry, triangle inequality). The pruning and matching
//! rules in the rest of the crate are only exact under these axioms.
//! Every metric declares the maximum distance attainable on the domain it is
//! used with (`d_max`), which bounds the pivot space.

use std::sync::Arc;

use crate::error::{Error, Result};

/// A distance function together with its identifier and domain diameter.
///
/// `d_max` is the largest distance the metric can return for the vectors it
/// will see. For Euclidean distance on unit-normalized vectors this is 2.0.
/// User-supplied metrics must declare their own bound; the grid domain and
/// percentage thresholds are derived from it.
pub trait Metric: Send + Sync {
    /// Stable identifier, stored in index files.
    fn id(&self) -> &str;

    /// Maximum possible distance on the normalized domain.
    fn d_max(&self) -> f64;

    /// Distance between two coordinate slices of equal length.
    fn distance(&self, a: &[f64], b: &[f64]) -> f64;
}

/// Euclidean (L2) distance. The required built-in; `d_max` is 2.0 on
/// unit-normalized vectors.
#[derive(Debug, Clone, Copy, Default)]
pub struct Euclidean;

pub const EUCLIDEAN_ID: &str = "euclidean";

impl Metric for Euclidean {
    fn id(&self) -> &str {
        EUCLIDEAN_ID
    }

    fn d_max(&self) -> f64 {
        2.0
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let mut sum = 0.0;
        for (x, y) in a.iter().zip(b) {
            let d = x - y;
            sum += d * d;
        }
        sum.sqrt()
    }
}

/// Resolves a metric identifier from an index file. Only `euclidean` is
/// built in; other ids must be supplied by the caller at load time.
pub fn resolve_metric(id: &str) -> Result<Arc<dyn Metric>> {
    match id {
        EUCLIDEAN_ID => Ok(Arc::new(Euclidean)),
        other => Err(Error::UnknownMetric(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_basics() {
        let m = Euclidean;
        assert_eq!(m.distance(&[0.0, 0.0], &[3.0, 4.0]), 5.0);
        assert_eq!(m.distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(m.d_max(), 2.0);
    }

    #[test]
    fn resolve_known_and_unknown() {
        assert!(resolve_metric("euclidean").is_ok());
        assert!(matches!(
            resolve_metric("cosine"),
            Err(Error::UnknownMetric(_))
        ));
    }
}
