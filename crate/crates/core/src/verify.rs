//! Inverted index over repository leaf cells and exact verification.
//!
//! The index maps each occupied leaf cell to a postings list of columns
//! with members in that cell, sorted by column ordinal. Verification
//! consumes the blocking output: matching pairs credit whole postings
//! lists outright; candidate pairs are resolved document-at-a-time,
//! visiting columns in ascending ordinal order across the cells of one
//! candidate pair via a priority queue of postings cursors. Per target
//! vector the mapped-space checks run first and an exact distance is
//! computed only when neither check decides.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use crate::error::{Error, Result};
use crate::grid::{CellIndices, HierarchicalGrid};
use crate::params::{JoinResult, SearchParams, SearchStats};
use crate::pivots::{pivot_filter_admits, pivot_match_confirms, MappedVector};
use crate::vector::Vector;

/// Columns of one leaf cell: ordinal plus the global ids of the column's
/// vectors that fall in the cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostingEntry {
    pub column: u32,
    pub vectors: Vec<u32>,
}

/// Map from leaf cell to its postings list, entries sorted by ordinal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InvertedIndex {
    postings: BTreeMap<CellIndices, Vec<PostingEntry>>,
}

impl InvertedIndex {
    pub fn postings(&self, cell: &CellIndices) -> Option<&[PostingEntry]> {
        self.postings.get(cell).map(|v| v.as_slice())
    }

    pub fn cells(&self) -> impl Iterator<Item = (&CellIndices, &Vec<PostingEntry>)> {
        self.postings.iter()
    }

    pub fn cell_count(&self) -> usize {
        self.postings.len()
    }

    /// Total number of (cell, column) entries.
    pub fn entry_count(&self) -> usize {
        self.postings.values().map(|v| v.len()).sum()
    }

    pub fn from_parts(postings: BTreeMap<CellIndices, Vec<PostingEntry>>) -> Self {
        Self { postings }
    }
}

/// Builds the inverted index for repository vectors. `mapped[i]` carries the
/// column ordinal of global vector id `i`; addresses come from the grid the
/// vectors were blocked under, so every vector lands in exactly one
/// (cell, column) entry.
pub fn build_inverted_index(
    mapped: &[MappedVector],
    grid: &HierarchicalGrid,
) -> Result<InvertedIndex> {
    let config = grid.config();
    let leaf = grid.leaf_level();
    let mut postings: BTreeMap<CellIndices, BTreeMap<u32, Vec<u32>>> = BTreeMap::new();
    for (vid, mv) in mapped.iter().enumerate() {
        let coords: Vec<f64> = mv
            .coords
            .iter()
            .map(|c| c.clamp(0.0, config.d_max))
            .collect();
        let cell = config.address(&coords, leaf);
        if !grid.is_occupied(leaf, &cell) {
            return Err(Error::Internal(format!(
                "vector {vid} addresses an unoccupied leaf cell"
            )));
        }
        postings
            .entry(cell)
            .or_default()
            .entry(mv.column)
            .or_default()
            .push(vid as u32);
    }
    let postings = postings
        .into_iter()
        .map(|(cell, cols)| {
            let entries = cols
                .into_iter()
                .map(|(column, vectors)| PostingEntry { column, vectors })
                .collect();
            (cell, entries)
        })
        .collect();
    Ok(InvertedIndex { postings })
}

/// True when the column can no longer reach the joinability threshold:
/// fewer than `t_count` query records remain unproven.
pub fn mismatch_prunable(mismatch_count: usize, query_size: usize, t_count: usize) -> bool {
    query_size.saturating_sub(mismatch_count) < t_count
}

/// When a query record is counted as mismatched against a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MismatchPolicy {
    /// Only once every candidate cell of the column for that record has
    /// been scanned without a match. Exactness-preserving; the default.
    #[default]
    CellExhausted,
    /// At the first cell that fails to produce a match. Enables earlier
    /// pruning, but when the column still has unscanned cells for the same
    /// record the prune can discard a column a later cell would have
    /// confirmed, so results may deviate from the exhaustive answer.
    FirstCell,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    /// Accept a column at `t_count` and drop provably hopeless columns.
    pub early_termination: bool,
    pub mismatch_policy: MismatchPolicy,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            early_termination: true,
            mismatch_policy: MismatchPolicy::CellExhausted,
        }
    }
}

/// Step-level record of a verification run, for tests and diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyEvent {
    MatchingPair { query: u32, cell: CellIndices },
    ColumnVisited { query: u32, column: u32 },
    CellScanned { query: u32, column: u32, cell: CellIndices },
    VectorFiltered { query: u32, vector: u32 },
    VectorPivotMatched { query: u32, vector: u32 },
    DistanceComputed { query: u32, vector: u32, matched: bool },
    MatchCounted { query: u32, column: u32, count: u32 },
    MismatchCounted { query: u32, column: u32, count: u32 },
    ColumnAccepted { column: u32 },
    ColumnPruned { column: u32 },
}

/// Everything verification needs to know about the indexed repository.
pub struct VerifyContext<'a> {
    pub index: &'a InvertedIndex,
    /// Original vectors, in global id order.
    pub repo_vectors: &'a [Vector],
    /// Mapped images, same order; `column` holds the ordinal.
    pub repo_mapped: &'a [MappedVector],
    /// Ordinal-ordered column ids.
    pub column_ids: &'a [String],
    pub metric: &'a dyn crate::metric::Metric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Decision {
    Undecided,
    Accepted,
    Pruned,
}

/// Match / mismatch bookkeeping for one search. A query record increments
/// the match count of a column at most once, and is counted as mismatched
/// at most once; the two never overlap, so
/// `match_map[c] + mismatch_map[c] <= |Q|` throughout.
pub struct Verifier<'a> {
    ctx: &'a VerifyContext<'a>,
    query_vectors: &'a [Vector],
    query_mapped: &'a [MappedVector],
    params: SearchParams,
    opts: VerifyOptions,
    match_map: Vec<u32>,
    mismatch_map: Vec<u32>,
    decided: Vec<Decision>,
    /// Per column: `query + 1` of the record credited last (dedup guard).
    credit: Vec<u32>,
    /// Per column: `query + 1` of a first-cell mismatch that may still be
    /// reverted by a later cell of the same record.
    tentative: Vec<u32>,
    mappings: Vec<Vec<(u32, u32)>>,
    stats: SearchStats,
    trace: Option<Vec<VerifyEvent>>,
}

impl<'a> Verifier<'a> {
    pub fn new(
        ctx: &'a VerifyContext<'a>,
        query_vectors: &'a [Vector],
        query_mapped: &'a [MappedVector],
        params: SearchParams,
        opts: VerifyOptions,
        record_trace: bool,
    ) -> Self {
        let n = ctx.column_ids.len();
        Self {
            ctx,
            query_vectors,
            query_mapped,
            params,
            opts,
            match_map: vec![0; n],
            mismatch_map: vec![0; n],
            decided: vec![Decision::Undecided; n],
            credit: vec![0; n],
            tentative: vec![0; n],
            mappings: vec![Vec::new(); n],
            stats: SearchStats::default(),
            trace: record_trace.then(Vec::new),
        }
    }

    fn emit(&mut self, event: VerifyEvent) {
        if let Some(t) = &mut self.trace {
            t.push(event);
        }
    }

    pub fn match_count(&self, column: u32) -> u32 {
        self.match_map[column as usize]
    }

    pub fn mismatch_count(&self, column: u32) -> u32 {
        self.mismatch_map[column as usize]
    }

    pub fn is_accepted(&self, column: u32) -> bool {
        self.decided[column as usize] == Decision::Accepted
    }

    pub fn is_pruned(&self, column: u32) -> bool {
        self.decided[column as usize] == Decision::Pruned
    }

    fn accept(&mut self, col: usize) {
        self.decided[col] = Decision::Accepted;
        self.stats.columns_early_accepted += 1;
        self.emit(VerifyEvent::ColumnAccepted { column: col as u32 });
    }

    fn count_match(&mut self, q: u32, col: usize, target_record: u32) {
        self.credit[col] = q + 1;
        self.match_map[col] += 1;
        debug_assert!(
            (self.match_map[col] + self.mismatch_map[col]) as usize <= self.query_vectors.len()
        );
        self.emit(VerifyEvent::MatchCounted {
            query: q,
            column: col as u32,
            count: self.match_map[col],
        });
        self.mappings[col].push((self.query_mapped[q as usize].record, target_record));
        if self.opts.early_termination && self.match_map[col] as usize >= self.params.t_count {
            self.accept(col);
        }
    }

    fn count_mismatch(&mut self, q: u32, col: usize) {
        self.mismatch_map[col] += 1;
        debug_assert!(
            (self.match_map[col] + self.mismatch_map[col]) as usize <= self.query_vectors.len()
        );
        self.emit(VerifyEvent::MismatchCounted {
            query: q,
            column: col as u32,
            count: self.mismatch_map[col],
        });
        if self.opts.early_termination
            && mismatch_prunable(
                self.mismatch_map[col] as usize,
                self.query_vectors.len(),
                self.params.t_count,
            )
        {
            self.decided[col] = Decision::Pruned;
            self.stats.columns_mismatch_pruned += 1;
            self.emit(VerifyEvent::ColumnPruned { column: col as u32 });
        }
    }

    /// Credits every undecided column in the cell's postings: the blocking
    /// phase proved that `query` matches everything in this cell.
    pub fn process_matching_pair(&mut self, query: u32, cell: &CellIndices) -> Result<()> {
        self.emit(VerifyEvent::MatchingPair { query, cell: cell.clone() });
        let ctx = self.ctx;
        let entries = ctx
            .index
            .postings(cell)
            .ok_or_else(|| Error::Internal("matching pair names an unindexed cell".into()))?;
        for entry in entries {
            let col = entry.column as usize;
            if self.decided[col] != Decision::Undecided {
                continue;
            }
            let q_record = self.query_mapped[query as usize].record;
            if self.credit[col] == query + 1 {
                // Already credited for this record via another cell; the
                // pairs are still proven matches, so record them.
                for &vid in &entry.vectors {
                    let target = ctx.repo_mapped[vid as usize].record;
                    self.mappings[col].push((q_record, target));
                }
                continue;
            }
            self.credit[col] = query + 1;
            self.match_map[col] += 1;
            self.emit(VerifyEvent::MatchCounted {
                query,
                column: col as u32,
                count: self.match_map[col],
            });
            for &vid in &entry.vectors {
                let target = ctx.repo_mapped[vid as usize].record;
                self.mappings[col].push((q_record, target));
            }
            if self.opts.early_termination
                && self.match_map[col] as usize >= self.params.t_count
            {
                self.accept(col);
            }
        }
        Ok(())
    }

    /// Resolves one candidate pair document-at-a-time: a cursor per cell,
    /// a priority queue over the cursors' current column ordinals, and per
    /// popped column a scan of its cells in address order.
    pub fn process_candidate_pair(&mut self, query: u32, cells: &[CellIndices]) -> Result<()> {
        let q = query as usize;
        let ctx = self.ctx;
        let query_vectors = self.query_vectors;
        let query_mapped = self.query_mapped;
        let q_coords = &query_mapped[q].coords;
        let slices: Vec<&[PostingEntry]> = cells
            .iter()
            .map(|c| {
                ctx.index
                    .postings(c)
                    .ok_or_else(|| Error::Internal("candidate cell not in the index".into()))
            })
            .collect::<Result<_>>()?;
        let mut positions = vec![0usize; cells.len()];
        let mut heap: BinaryHeap<Reverse<(u32, usize)>> = BinaryHeap::new();
        for (slot, slice) in slices.iter().enumerate() {
            if let Some(first) = slice.first() {
                heap.push(Reverse((first.column, slot)));
            }
        }

        while let Some(Reverse((col_ord, slot0))) = heap.pop() {
            // Batch every cursor currently at this column; cells scan in
            // ascending address order because slots follow the sorted cell
            // list.
            let mut batch = vec![slot0];
            while let Some(Reverse((c, _))) = heap.peek() {
                if *c != col_ord {
                    break;
                }
                let Reverse((_, slot)) = heap.pop().unwrap();
                batch.push(slot);
            }
            batch.sort_unstable();
            self.emit(VerifyEvent::ColumnVisited { query, column: col_ord });

            let col = col_ord as usize;
            let skip_all =
                self.decided[col] != Decision::Undecided || self.credit[col] == query + 1;

            let mut matched = false;
            let mut skip_rest = false;
            for &slot in &batch {
                if !(skip_all || matched || skip_rest) {
                    let entry = &slices[slot][positions[slot]];
                    debug_assert_eq!(entry.column, col_ord);
                    self.emit(VerifyEvent::CellScanned {
                        query,
                        column: col_ord,
                        cell: cells[slot].clone(),
                    });
                    for &vid in &entry.vectors {
                        let xm = &ctx.repo_mapped[vid as usize];
                        if !pivot_filter_admits(q_coords, &xm.coords, self.params.tau) {
                            self.stats.pivot_filtered += 1;
                            self.emit(VerifyEvent::VectorFiltered { query, vector: vid });
                            continue;
                        }
                        let is_match =
                            if pivot_match_confirms(q_coords, &xm.coords, self.params.tau) {
                                self.stats.pivot_matched += 1;
                                self.emit(VerifyEvent::VectorPivotMatched { query, vector: vid });
                                true
                            } else {
                                let d = ctx.metric.distance(
                                    query_vectors[q].coords(),
                                    ctx.repo_vectors[vid as usize].coords(),
                                );
                                self.stats.distance_computations += 1;
                                let m = d <= self.params.tau;
                                self.emit(VerifyEvent::DistanceComputed {
                                    query,
                                    vector: vid,
                                    matched: m,
                                });
                                m
                            };
                        if is_match {
                            matched = true;
                            if self.tentative[col] == query + 1 {
                                // Revert a first-cell mismatch for this record.
                                self.mismatch_map[col] -= 1;
                                self.tentative[col] = 0;
                            }
                            let target = ctx.repo_mapped[vid as usize].record;
                            self.count_match(query, col, target);
                            break;
                        }
                    }
                    if !matched
                        && self.opts.mismatch_policy == MismatchPolicy::FirstCell
                        && self.tentative[col] != query + 1
                    {
                        self.tentative[col] = query + 1;
                        self.count_mismatch(query, col);
                        if self.decided[col] == Decision::Pruned {
                            skip_rest = true;
                        }
                    }
                }
                // Advance this cell's cursor regardless.
                positions[slot] += 1;
                if positions[slot] < slices[slot].len() {
                    heap.push(Reverse((slices[slot][positions[slot]].column, slot)));
                }
            }

            if !(skip_all || matched || skip_rest)
                && self.opts.mismatch_policy == MismatchPolicy::CellExhausted
            {
                self.count_mismatch(query, col);
            }
        }
        Ok(())
    }

    /// Joinable set and mappings. A column is joinable when its match count
    /// reached `t_count`; early acceptance only marks it sooner.
    pub fn finish(self) -> (JoinResult, Option<Vec<VerifyEvent>>) {
        let mut joinable = Vec::new();
        let mut mappings = BTreeMap::new();
        for (col, id) in self.ctx.column_ids.iter().enumerate() {
            let accepted = self.decided[col] == Decision::Accepted
                || self.match_map[col] as usize >= self.params.t_count;
            if accepted {
                joinable.push(id.clone());
                mappings.insert(id.clone(), self.mappings[col].clone());
            }
        }
        joinable.sort();
        (
            JoinResult {
                joinable,
                mappings,
                stats: self.stats,
            },
            self.trace,
        )
    }
}

/// Runs full verification over blocking output: matching pairs first, then
/// candidate pairs per query vector. Returns the exact joinable set.
#[allow(clippy::too_many_arguments)]
pub fn verify(
    ctx: &VerifyContext,
    query_vectors: &[Vector],
    query_mapped: &[MappedVector],
    matching: &[(u32, CellIndices)],
    candidates: &[(u32, Vec<CellIndices>)],
    params: SearchParams,
    opts: VerifyOptions,
) -> Result<JoinResult> {
    verify_traced(
        ctx,
        query_vectors,
        query_mapped,
        matching,
        candidates,
        params,
        opts,
        false,
    )
    .map(|(r, _)| r)
}

/// As [`verify`], optionally recording the step-level event trace.
#[allow(clippy::too_many_arguments)]
pub fn verify_traced(
    ctx: &VerifyContext,
    query_vectors: &[Vector],
    query_mapped: &[MappedVector],
    matching: &[(u32, CellIndices)],
    candidates: &[(u32, Vec<CellIndices>)],
    params: SearchParams,
    opts: VerifyOptions,
    record_trace: bool,
) -> Result<(JoinResult, Option<Vec<VerifyEvent>>)> {
    if params.t_count > query_vectors.len() {
        return Err(Error::InvalidThreshold(format!(
            "t_count = {} exceeds the query size {}",
            params.t_count,
            query_vectors.len()
        )));
    }
    let mut verifier = Verifier::new(ctx, query_vectors, query_mapped, params, opts, record_trace);
    for (q, cell) in matching {
        verifier.process_matching_pair(*q, cell)?;
    }
    for (q, cells) in candidates {
        verifier.process_candidate_pair(*q, cells)?;
    }
    Ok(verifier.finish())
}
