//! Hierarchical grids over the pivot space and the blocking descent.
//!
//! A grid has `m` levels; level `i` slices every pivot dimension into `2^i`
//! equal parts, so level `i` has `2^(|P| * i)` addressable cells. Only
//! occupied cells are stored. The query grid keeps the member vectors of
//! each leaf cell; the repository grid stores occupancy only and defers
//! membership to the inverted index.
//!
//! Blocking walks both grids top-down in lockstep and classifies every
//! (query vector, occupied repository leaf) pair as pruned, matching, or
//! candidate. Pruning uses box intersection against the query region
//! (sound: dismissed pairs provably do not match); matching uses
//! origin-anchored boxes (sound: emitted pairs provably match).

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::pivots::MappedVector;

/// Addressing of one grid cell within its level.
pub type CellIndices = Vec<u32>;

/// Shape of a hierarchical grid: pivot-space dimensionality, level count,
/// and the per-dimension domain `[0, d_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub n_dims: usize,
    pub levels: u32,
    pub d_max: f64,
}

impl GridConfig {
    pub fn new(n_dims: usize, levels: u32, d_max: f64) -> Result<Self> {
        if levels < 1 {
            return Err(Error::InvalidConfig("grid must have at least one level".into()));
        }
        if levels > 24 {
            return Err(Error::InvalidConfig(format!("grid level count {levels} is too large")));
        }
        if n_dims == 0 {
            return Err(Error::InvalidConfig("grid needs at least one dimension".into()));
        }
        if !(d_max.is_finite() && d_max > 0.0) {
            return Err(Error::InvalidConfig(format!("invalid domain bound {d_max}")));
        }
        Ok(Self { n_dims, levels, d_max })
    }

    /// Per-dimension slice width at `level`.
    pub fn width(&self, level: u32) -> f64 {
        self.d_max / (1u64 << level) as f64
    }

    pub fn slices(&self, level: u32) -> u32 {
        1u32 << level
    }

    /// Cell address of a coordinate vector at `level`. Coordinates exactly
    /// at `d_max` belong to the last slice (closed upper edge).
    pub fn address(&self, coords: &[f64], level: u32) -> CellIndices {
        let w = self.width(level);
        let last = self.slices(level) - 1;
        coords
            .iter()
            .map(|&c| {
                let i = (c / w).floor();
                if i < 0.0 {
                    0
                } else {
                    (i as u32).min(last)
                }
            })
            .collect()
    }
}

/// One grid cell: a level and per-dimension slice indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Cell {
    pub level: u32,
    pub indices: CellIndices,
}

impl Cell {
    pub fn parent(&self) -> Option<Cell> {
        if self.level <= 1 {
            return None;
        }
        Some(Cell {
            level: self.level - 1,
            indices: self.indices.iter().map(|i| i >> 1).collect(),
        })
    }

    /// Lower and upper corners. Cells are half-open above except the last
    /// slice per dimension, whose upper edge is closed.
    pub fn bounds(&self, config: &GridConfig) -> (Vec<f64>, Vec<f64>) {
        let w = config.width(self.level);
        let lo: Vec<f64> = self.indices.iter().map(|&i| i as f64 * w).collect();
        let hi: Vec<f64> = self.indices.iter().map(|&i| (i + 1) as f64 * w).collect();
        (lo, hi)
    }

    pub fn length(&self, config: &GridConfig) -> f64 {
        config.width(self.level)
    }

    pub fn center(&self, config: &GridConfig) -> Vec<f64> {
        let w = config.width(self.level);
        self.indices.iter().map(|&i| (i as f64 + 0.5) * w).collect()
    }
}

/// An axis-aligned box; upper bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    /// Whether the box intersects the (closed) cell bounds. Treating cell
    /// bounds as closed is conservative: a boundary touch keeps the pair.
    pub fn intersects(&self, cell_lo: &[f64], cell_hi: &[f64]) -> bool {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(cell_lo.iter().zip(cell_hi))
            .all(|((blo, bhi), (clo, chi))| clo <= bhi && chi >= blo)
    }

    /// Whether the (closed) cell bounds lie entirely inside the box.
    pub fn contains_cell(&self, cell_lo: &[f64], cell_hi: &[f64]) -> bool {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(cell_lo.iter().zip(cell_hi))
            .all(|((blo, bhi), (clo, chi))| blo <= clo && chi <= bhi)
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(p)
            .all(|((lo, hi), c)| lo <= c && c <= hi)
    }
}

/// Query region of half-width `tau` around a mapped query vector, clipped
/// to the domain. Everything outside provably does not match.
pub fn sqr_of_vector(q: &[f64], tau: f64, config: &GridConfig) -> AxisBox {
    AxisBox {
        lo: q.iter().map(|c| (c - tau).max(0.0)).collect(),
        hi: q.iter().map(|c| (c + tau).min(config.d_max)).collect(),
    }
}

/// Query region of a whole query cell: the cell bounds padded by `tau`,
/// clipped to the domain. Everything outside provably matches no member.
pub fn sqr_of_cell(cell: &Cell, tau: f64, config: &GridConfig) -> AxisBox {
    let (lo, hi) = cell.bounds(config);
    AxisBox {
        lo: lo.iter().map(|c| (c - tau).max(0.0)).collect(),
        hi: hi.iter().map(|c| (c + tau).min(config.d_max)).collect(),
    }
}

/// Origin-anchored match region of a query vector for pivot dimension
/// `pivot_index`: everything inside provably matches. `None` when the
/// region would have negative extent.
pub fn rqr_of_vector(q: &[f64], pivot_index: usize, tau: f64) -> Option<AxisBox> {
    let extent = tau - q[pivot_index];
    if extent < 0.0 {
        return None;
    }
    let dims = q.len();
    let mut hi = vec![f64::INFINITY; dims];
    hi[pivot_index] = extent;
    Some(AxisBox { lo: vec![0.0; dims], hi })
}

/// Conservative intersection of the match regions of every possible member
/// of a query cell, computed from the cell's upper corner. A subset of
/// every actual member's region, so anything inside matches all members.
pub fn min_rqr_of_cell(
    cell: &Cell,
    pivot_index: usize,
    tau: f64,
    config: &GridConfig,
) -> Option<AxisBox> {
    let (_, hi_bounds) = cell.bounds(config);
    let extent = tau - hi_bounds[pivot_index];
    if extent < 0.0 {
        return None;
    }
    let dims = cell.indices.len();
    let mut hi = vec![f64::INFINITY; dims];
    hi[pivot_index] = extent;
    Some(AxisBox { lo: vec![0.0; dims], hi })
}

#[derive(Debug, Default, Clone)]
struct CellNode {
    children: Vec<CellIndices>,
    members: Vec<u32>,
    /// Vectors in this subtree.
    vec_count: u64,
    /// Occupied leaf cells in this subtree.
    leaf_count: u64,
}

/// Sparse hierarchical grid. Level `i` (1-based) lives at `levels[i - 1]`;
/// cells are ordered lexicographically by their indices, which fixes the
/// iteration order everywhere downstream.
#[derive(Debug, Clone)]
pub struct HierarchicalGrid {
    config: GridConfig,
    levels: Vec<BTreeMap<CellIndices, CellNode>>,
    keeps_membership: bool,
}

/// Builds a grid over mapped vectors. Coordinates marginally outside the
/// domain (within 1e-9) are clamped with a warning; anything farther out is
/// an error. Membership lists are stored only when `keep_membership` is set.
pub fn build_grid(
    mapped: &[MappedVector],
    config: &GridConfig,
    keep_membership: bool,
) -> Result<HierarchicalGrid> {
    let mut levels: Vec<BTreeMap<CellIndices, CellNode>> =
        vec![BTreeMap::new(); config.levels as usize];

    for (vi, mv) in mapped.iter().enumerate() {
        if mv.coords.len() != config.n_dims {
            return Err(Error::DimensionMismatch {
                expected: config.n_dims,
                got: mv.coords.len(),
            });
        }
        let mut coords = mv.coords.clone();
        for c in &mut coords {
            if *c < 0.0 || *c > config.d_max {
                if *c >= -1e-9 && *c <= config.d_max + 1e-9 {
                    log::warn!("clamping pivot coordinate {c} into [0, {}]", config.d_max);
                    *c = c.clamp(0.0, config.d_max);
                } else {
                    return Err(Error::InvalidConfig(format!(
                        "pivot coordinate {c} outside [0, {}]",
                        config.d_max
                    )));
                }
            }
        }
        let leaf = config.address(&coords, config.levels);
        let node = levels[config.levels as usize - 1]
            .entry(leaf.clone())
            .or_default();
        node.vec_count += 1;
        if keep_membership {
            node.members.push(vi as u32);
        }
        // Chain the occupied ancestors.
        let mut child = leaf;
        for level in (1..config.levels).rev() {
            let parent: CellIndices = child.iter().map(|i| i >> 1).collect();
            let node = levels[level as usize - 1].entry(parent.clone()).or_default();
            node.vec_count += 1;
            child = parent;
        }
    }

    // Leaves count themselves; child links and subtree leaf counts go
    // bottom-up from there.
    for node in levels[config.levels as usize - 1].values_mut() {
        node.leaf_count = 1;
    }
    for level in (1..config.levels).rev() {
        let child_info: Vec<(CellIndices, u64)> = levels[level as usize]
            .iter()
            .map(|(k, n)| (k.clone(), n.leaf_count))
            .collect();
        for (key, leaves) in child_info {
            let parent: CellIndices = key.iter().map(|i| i >> 1).collect();
            let node = levels[level as usize - 1]
                .get_mut(&parent)
                .expect("occupied cell must have an occupied parent");
            node.children.push(key);
            node.leaf_count += leaves;
        }
    }

    Ok(HierarchicalGrid {
        config: config.clone(),
        levels,
        keeps_membership: keep_membership,
    })
}

impl HierarchicalGrid {
    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn keeps_membership(&self) -> bool {
        self.keeps_membership
    }

    /// Occupied cell addresses at `level` (1-based), in lexicographic order.
    pub fn occupied(&self, level: u32) -> impl Iterator<Item = &CellIndices> {
        self.levels[level as usize - 1].keys()
    }

    pub fn occupied_count(&self, level: u32) -> usize {
        self.levels[level as usize - 1].len()
    }

    pub fn is_occupied(&self, level: u32, indices: &CellIndices) -> bool {
        self.levels[level as usize - 1].contains_key(indices)
    }

    /// Member vectors of a leaf cell (only if membership was kept).
    pub fn leaf_members(&self, indices: &CellIndices) -> &[u32] {
        self.levels[self.config.levels as usize - 1]
            .get(indices)
            .map(|n| n.members.as_slice())
            .unwrap_or(&[])
    }

    pub fn leaf_level(&self) -> u32 {
        self.config.levels
    }

    fn node(&self, level: u32, indices: &CellIndices) -> &CellNode {
        &self.levels[level as usize - 1][indices]
    }

    fn vec_count(&self, level: u32, indices: &CellIndices) -> u64 {
        self.node(level, indices).vec_count
    }

    fn leaf_count(&self, level: u32, indices: &CellIndices) -> u64 {
        self.node(level, indices).leaf_count
    }

    /// Occupied leaves under the given cell, with their members, in
    /// depth-first address order.
    fn collect_leaves<'a>(
        &'a self,
        level: u32,
        indices: &CellIndices,
    ) -> Vec<(&'a CellIndices, &'a [u32])> {
        let (k0, n0) = self.levels[level as usize - 1]
            .get_key_value(indices)
            .expect("cell must be occupied");
        let mut out = Vec::new();
        let mut stack: Vec<(u32, &'a CellIndices, &'a CellNode)> = vec![(level, k0, n0)];
        while let Some((l, key, node)) = stack.pop() {
            if l == self.config.levels {
                out.push((key, node.members.as_slice()));
            } else {
                for child in node.children.iter().rev() {
                    let (ck, cn) = self.levels[l as usize]
                        .get_key_value(child)
                        .expect("child cell must be occupied");
                    stack.push((l + 1, ck, cn));
                }
            }
        }
        out
    }

    /// Total vectors indexed by the grid.
    pub fn total_vectors(&self) -> u64 {
        self.levels[0].values().map(|n| n.vec_count).sum()
    }
}

/// Leaf-granularity accounting of one blocking run. With quick-browse
/// skipping disabled, `matched + candidates + pruned` equals
/// `|Q| * occupied leaf count` of the repository grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BlockAccounting {
    pub leaf_matched: u64,
    pub leaf_candidates: u64,
    pub leaf_pruned: u64,
    /// Same-address pairs handed over to quick browsing.
    pub leaf_skipped: u64,
}

/// Result of the blocking phase: per query vector, the repository leaf
/// cells proven matching and the ones left undecided. No (vector, cell)
/// pair appears in both lists.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockingOutput {
    /// Proven (query vector, leaf cell) pairs, sorted.
    pub matching: Vec<(u32, CellIndices)>,
    /// Undecided pairs, grouped per query vector with sorted cell lists.
    pub candidates: Vec<(u32, Vec<CellIndices>)>,
    pub accounting: BlockAccounting,
    /// Cell-granularity prune / match counts from the descent.
    pub cells_pruned: u64,
    pub cells_matched: u64,
}

/// Pairs each query vector with the repository leaf cell sharing its
/// address, when occupied. Such pairs can never be pruned by the box
/// checks, so they go straight to verification as candidates.
pub fn quick_browse(
    query_grid: &HierarchicalGrid,
    target_grid: &HierarchicalGrid,
) -> Result<Vec<(u32, CellIndices)>> {
    if query_grid.config != target_grid.config {
        return Err(Error::InvalidConfig(
            "quick browsing requires grids with identical configuration".into(),
        ));
    }
    if !query_grid.keeps_membership {
        return Err(Error::InvalidConfig(
            "query grid must keep leaf membership".into(),
        ));
    }
    let leaf = query_grid.leaf_level();
    let mut out = Vec::new();
    for indices in query_grid.occupied(leaf) {
        if target_grid.is_occupied(leaf, indices) {
            for &q in query_grid.leaf_members(indices) {
                out.push((q, indices.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Grid-vs-grid blocking: a simultaneous top-down descent over both grids,
/// query-cell major. Non-leaf pairs are pruned or wholly matched with
/// cell-cell checks; at the leaf level each member query vector is tested
/// against the repository cell individually. Pairs that are neither pruned
/// nor matched become candidates.
///
/// `query_mapped` is the slice the query grid's membership indices point
/// into. With `skip_same_leaf` set, pairs whose leaf addresses coincide are
/// left out entirely (quick browsing already emitted them as candidates).
pub fn block(
    query_grid: &HierarchicalGrid,
    query_mapped: &[MappedVector],
    target_grid: &HierarchicalGrid,
    tau: f64,
    skip_same_leaf: bool,
) -> Result<BlockingOutput> {
    if query_grid.config != target_grid.config {
        return Err(Error::InvalidConfig(
            "blocking requires grids with identical configuration".into(),
        ));
    }
    if !query_grid.keeps_membership {
        return Err(Error::InvalidConfig(
            "query grid must keep leaf membership".into(),
        ));
    }
    let config = &query_grid.config;
    let leaf_level = config.levels;

    let mut matching: BTreeSet<(u32, CellIndices)> = BTreeSet::new();
    let mut candidates: BTreeMap<u32, BTreeSet<CellIndices>> = BTreeMap::new();
    let mut acct = BlockAccounting::default();
    let mut cells_pruned = 0u64;
    let mut cells_matched = 0u64;

    let mut active: Vec<(CellIndices, CellIndices)> = Vec::new();
    for q_cell in query_grid.occupied(1) {
        for t_cell in target_grid.occupied(1) {
            active.push((q_cell.clone(), t_cell.clone()));
        }
    }

    for level in 1..=leaf_level {
        let mut next = Vec::new();
        for (q_idx, t_idx) in active.drain(..) {
            let t_cell = Cell { level, indices: t_idx.clone() };
            let (t_lo, t_hi) = t_cell.bounds(config);

            if level < leaf_level {
                let q_cell = Cell { level, indices: q_idx.clone() };
                // Cell-cell filtering.
                let region = sqr_of_cell(&q_cell, tau, config);
                if !region.intersects(&t_lo, &t_hi) {
                    cells_pruned += 1;
                    acct.leaf_pruned += query_grid.vec_count(level, &q_idx)
                        * target_grid.leaf_count(level, &t_idx);
                    continue;
                }
                // Cell-cell matching: the target cell inside the common
                // match region of every possible query member.
                let matched = (0..config.n_dims).any(|i| {
                    min_rqr_of_cell(&q_cell, i, tau, config)
                        .map_or(false, |r| r.contains_cell(&t_lo, &t_hi))
                });
                if matched {
                    cells_matched += 1;
                    let q_leaves = query_grid.collect_leaves(level, &q_idx);
                    for (leaf_idx, _) in target_grid.collect_leaves(level, &t_idx) {
                        for (q_leaf, members) in &q_leaves {
                            if skip_same_leaf && *q_leaf == leaf_idx {
                                acct.leaf_skipped += members.len() as u64;
                                continue;
                            }
                            for &q in *members {
                                matching.insert((q, leaf_idx.clone()));
                                acct.leaf_matched += 1;
                            }
                        }
                    }
                    continue;
                }
                for qc in &query_grid.node(level, &q_idx).children {
                    for tc in &target_grid.node(level, &t_idx).children {
                        next.push((qc.clone(), tc.clone()));
                    }
                }
            } else {
                if skip_same_leaf && q_idx == t_idx {
                    acct.leaf_skipped += query_grid.leaf_members(&q_idx).len() as u64;
                    continue;
                }
                for &q in query_grid.leaf_members(&q_idx) {
                    let coords = &query_mapped[q as usize].coords;
                    // Vector-cell filtering.
                    let region = sqr_of_vector(coords, tau, config);
                    if !region.intersects(&t_lo, &t_hi) {
                        cells_pruned += 1;
                        acct.leaf_pruned += 1;
                        continue;
                    }
                    // Vector-cell matching.
                    let matched = (0..config.n_dims).any(|i| {
                        rqr_of_vector(coords, i, tau)
                            .map_or(false, |r| r.contains_cell(&t_lo, &t_hi))
                    });
                    if matched {
                        cells_matched += 1;
                        matching.insert((q, t_idx.clone()));
                        acct.leaf_matched += 1;
                    } else {
                        candidates.entry(q).or_default().insert(t_idx.clone());
                        acct.leaf_candidates += 1;
                    }
                }
            }
        }
        active = next;
    }

    let candidates = candidates
        .into_iter()
        .map(|(q, cells)| (q, cells.into_iter().collect()))
        .collect();

    Ok(BlockingOutput {
        matching: matching.into_iter().collect(),
        candidates,
        accounting: acct,
        cells_pruned,
        cells_matched,
    })
}
