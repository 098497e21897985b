//! Search parameters, threshold resolution, and search results.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::Metric;

/// Resolved search thresholds: an absolute distance threshold and an
/// absolute joinability count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    /// Distance threshold; a pair matches when distance <= tau.
    pub tau: f64,
    /// Minimum number of query records with at least one match.
    pub t_count: usize,
}

impl SearchParams {
    pub fn new(tau: f64, t_count: usize, metric: &dyn Metric) -> Result<Self> {
        if !tau.is_finite() || tau < 0.0 {
            return Err(Error::InvalidThreshold(format!("tau = {tau}")));
        }
        if tau > metric.d_max() {
            return Err(Error::InvalidThreshold(format!(
                "tau = {tau} exceeds the metric's maximum distance {}",
                metric.d_max()
            )));
        }
        if t_count < 1 {
            return Err(Error::InvalidThreshold("t_count must be >= 1".into()));
        }
        Ok(Self { tau, t_count })
    }

    /// Resolves percentage thresholds against a concrete query size.
    ///
    /// `tau = tau_pct * d_max` and `t_count = ceil(t_pct * query_size)`,
    /// clamped to at least 1. Assumes unit-normalized vectors so that the
    /// metric's `d_max` is attained.
    pub fn resolve(
        tau_pct: f64,
        t_pct: f64,
        query_size: usize,
        metric: &dyn Metric,
    ) -> Result<Self> {
        let (tau, t_count) = resolve_thresholds(tau_pct, t_pct, query_size, metric)?;
        SearchParams::new(tau, t_count, metric)
    }
}

/// Converts percentage thresholds to absolute values.
pub fn resolve_thresholds(
    tau_pct: f64,
    t_pct: f64,
    query_size: usize,
    metric: &dyn Metric,
) -> Result<(f64, usize)> {
    if !(0.0..=1.0).contains(&tau_pct) {
        return Err(Error::InvalidThreshold(format!(
            "tau_pct = {tau_pct}, expected a fraction in [0, 1]"
        )));
    }
    if !(t_pct > 0.0 && t_pct <= 1.0) {
        return Err(Error::InvalidThreshold(format!(
            "t_pct = {t_pct}, expected a fraction in (0, 1]"
        )));
    }
    if query_size == 0 {
        return Err(Error::InvalidThreshold("query size is zero".into()));
    }
    let tau = tau_pct * metric.d_max();
    let raw = t_pct * query_size as f64;
    // Snap near-integer products before the ceiling so that e.g.
    // 0.6 * 1000 resolves to 600 rather than 601.
    let rounded = raw.round();
    let t = if (raw - rounded).abs() < 1e-9 {
        rounded
    } else {
        raw.ceil()
    };
    let t_count = (t as usize).clamp(1, query_size);
    Ok((tau, t_count))
}

/// Engine toggles. Both default to enabled; disabling either never changes
/// the result set, only the work performed.
#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    /// Pair query vectors directly with repository leaf cells that share
    /// their cell address, ahead of the grid-vs-grid descent.
    pub quick_browse: bool,
    /// Accept a column as soon as its match count reaches `t_count` and
    /// drop a column as soon as it provably cannot reach it.
    pub early_termination: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            quick_browse: true,
            early_termination: true,
        }
    }
}

/// Instrumentation counters for one search.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    /// Exact query-to-target distance evaluations during verification.
    pub distance_computations: u64,
    /// Query-to-pivot distance evaluations spent mapping the query.
    pub mapping_distances: u64,
    /// (query vector, leaf cell) candidate entries, quick browsing included.
    pub candidate_pairs: u64,
    /// (query vector, leaf cell) pairs proven matching during blocking.
    pub matching_pairs: u64,
    /// Candidate entries contributed by quick browsing.
    pub quick_browse_pairs: u64,
    /// Target vectors dismissed by the per-coordinate pivot band check.
    pub pivot_filtered: u64,
    /// Target vectors confirmed by the pivot sum check, no distance needed.
    pub pivot_matched: u64,
    /// Cell pairs (or vector-cell pairs) pruned during blocking.
    pub cells_pruned: u64,
    /// Cell pairs (or vector-cell pairs) proven matching during blocking.
    pub cells_matched: u64,
    /// Columns accepted before all their pairs were processed.
    pub columns_early_accepted: u64,
    /// Columns dropped because too few query records remained unmatched.
    pub columns_mismatch_pruned: u64,
}

impl SearchStats {
    pub fn merge(&mut self, other: &SearchStats) {
        self.distance_computations += other.distance_computations;
        self.mapping_distances += other.mapping_distances;
        self.candidate_pairs += other.candidate_pairs;
        self.matching_pairs += other.matching_pairs;
        self.quick_browse_pairs += other.quick_browse_pairs;
        self.pivot_filtered += other.pivot_filtered;
        self.pivot_matched += other.pivot_matched;
        self.cells_pruned += other.cells_pruned;
        self.cells_matched += other.cells_matched;
        self.columns_early_accepted += other.columns_early_accepted;
        self.columns_mismatch_pruned += other.columns_mismatch_pruned;
    }
}

/// The answer to a joinable-column search.
///
/// `mappings` lists the (query record index, target record index) pairs
/// discovered for each joinable column. All listed pairs satisfy the
/// distance predicate. When early termination is enabled the engine stops
/// examining a column once its joinability is decided, so mappings contain
/// the pairs found up to that point rather than every matching pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JoinResult {
    /// Ids of joinable columns, sorted.
    pub joinable: Vec<String>,
    /// Per joinable column: matched (query record, target record) pairs.
    pub mappings: BTreeMap<String, Vec<(u32, u32)>>,
    pub stats: SearchStats,
}

impl JoinResult {
    /// Result-set equality ignoring stats and mapping truncation depth.
    pub fn same_joinable(&self, other: &JoinResult) -> bool {
        self.joinable == other.joinable
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Euclidean;

    #[test]
    fn resolve_default_percentages() {
        let (tau, t) = resolve_thresholds(0.06, 0.60, 1000, &Euclidean).unwrap();
        assert!((tau - 0.12).abs() < 1e-15);
        assert_eq!(t, 600);
    }

    #[test]
    fn resolve_zero_tau_is_exact_match_regime() {
        let (tau, t) = resolve_thresholds(0.0, 0.25, 8, &Euclidean).unwrap();
        assert_eq!(tau, 0.0);
        assert_eq!(t, 2);
    }

    #[test]
    fn resolve_ceils_to_at_least_one() {
        let (tau, t) = resolve_thresholds(0.08, 0.20, 5, &Euclidean).unwrap();
        assert!((tau - 0.16).abs() < 1e-15);
        assert_eq!(t, 1);
    }

    #[test]
    fn resolve_rejects_out_of_range() {
        assert!(resolve_thresholds(-0.1, 0.5, 10, &Euclidean).is_err());
        assert!(resolve_thresholds(1.1, 0.5, 10, &Euclidean).is_err());
        assert!(resolve_thresholds(0.1, 0.0, 10, &Euclidean).is_err());
        assert!(resolve_thresholds(0.1, 1.5, 10, &Euclidean).is_err());
    }

    #[test]
    fn resolve_true_ceiling_when_fractional() {
        let (_, t) = resolve_thresholds(0.05, 0.61, 10, &Euclidean).unwrap();
        assert_eq!(t, 7); // 6.1 -> 7
    }

    #[test]
    fn params_validation() {
        assert!(SearchParams::new(2.5, 1, &Euclidean).is_err());
        assert!(SearchParams::new(-0.1, 1, &Euclidean).is_err());
        assert!(SearchParams::new(0.5, 0, &Euclidean).is_err());
        assert!(SearchParams::new(0.5, 3, &Euclidean).is_ok());
    }
}
