//! Exact joinable-column search over repositories of vector-embedded table
//! columns.
//!
//! Given a query column of metric-space vectors, a distance threshold, and
//! a joinability threshold, the engine returns every repository column
//! whose joinability meets the threshold, with record-level match mappings.
//! Candidates are narrowed by pivot-based filtering and hierarchical-grid
//! blocking, then resolved exactly through an inverted index; a brute-force
//! oracle defines ground truth.

pub mod brute;
pub mod cost;
pub mod engine;
pub mod error;
pub mod file;
pub mod grid;
pub mod jsonl;
pub mod metric;
pub mod params;
pub mod partition;
pub mod pivots;
pub mod vector;
pub mod verify;

pub use brute::{brute_force_search, joinability};
pub use error::{Error, Result};
pub use grid::{
    block, build_grid, quick_browse, AxisBox, BlockAccounting, BlockingOutput, Cell, CellIndices,
    GridConfig, HierarchicalGrid,
};
pub use metric::{resolve_metric, Euclidean, Metric};
pub use params::{resolve_thresholds, JoinResult, SearchOptions, SearchParams, SearchStats};
pub use pivots::{
    pivot_filter_admits, pivot_match_confirms, select_pivots_pca, select_pivots_random,
    MappedVector, PivotSet,
};
pub use vector::{distance, matches, normalize, Column, Repository, Vector};
pub use verify::{
    build_inverted_index, mismatch_prunable, verify, verify_traced, InvertedIndex,
    MismatchPolicy, PostingEntry, Verifier, VerifyContext, VerifyEvent, VerifyOptions,
};
