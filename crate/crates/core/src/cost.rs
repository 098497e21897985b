//! Expected verification cost and workload-driven grid depth selection.
//!
//! The estimator upper-bounds, per query vector, the number of repository
//! vectors in leaf cells that overlap its query region: along every pivot
//! dimension it counts histogram mass in the region widened by one leaf
//! cell width, and takes the dimension-wise minimum. Grid depth is chosen
//! by running blocking only (no verification) for each candidate depth and
//! summing the estimate over a workload.

use std::collections::HashMap;
use std::ops::RangeInclusive;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{block, build_grid, GridConfig};
use crate::pivots::{MappedVector, PivotSet};
use crate::vector::{Column, Repository};

/// Equi-width per-dimension histograms over the pivot space `[0, d_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DimHistogram {
    d_max: f64,
    bins: usize,
    counts: Vec<Vec<u64>>,
    total: u64,
}

/// Builds per-dimension bin counts over mapped vectors.
pub fn estimate_pdf(mapped: &[MappedVector], bins: usize, d_max: f64) -> Result<DimHistogram> {
    if bins < 1 {
        return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
    }
    if mapped.is_empty() {
        return Err(Error::EmptyRepository);
    }
    let dims = mapped[0].coords.len();
    let mut counts = vec![vec![0u64; bins]; dims];
    let w = d_max / bins as f64;
    for mv in mapped {
        if mv.coords.len() != dims {
            return Err(Error::DimensionMismatch { expected: dims, got: mv.coords.len() });
        }
        for (d, &c) in mv.coords.iter().enumerate() {
            let b = ((c / w).floor() as i64).clamp(0, bins as i64 - 1) as usize;
            counts[d][b] += 1;
        }
    }
    Ok(DimHistogram { d_max, bins, counts, total: mapped.len() as u64 })
}

impl DimHistogram {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn dims(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn from_parts(d_max: f64, bins: usize, counts: Vec<Vec<u64>>, total: u64) -> Self {
        Self { d_max, bins, counts, total }
    }

    /// Mass of every bin intersecting the closed interval `[lo, hi]`,
    /// clipped to the domain. Whole-bin counting makes this an upper bound
    /// on the number of vectors with a coordinate in the interval.
    pub fn interval_count(&self, dim: usize, lo: f64, hi: f64) -> u64 {
        if hi < 0.0 || lo > self.d_max || hi < lo {
            return 0;
        }
        let w = self.d_max / self.bins as f64;
        let b_lo = ((lo.max(0.0) / w).floor() as i64).clamp(0, self.bins as i64 - 1) as usize;
        let b_hi = ((hi.min(self.d_max) / w).floor() as i64).clamp(0, self.bins as i64 - 1) as usize;
        self.counts[dim][b_lo..=b_hi].iter().sum()
    }
}

/// Upper bound on the number of vectors in leaf cells that intersect the
/// query region of `q` at threshold `tau`, for a grid of depth `m`. The
/// region is widened by one leaf cell width per side so that whole
/// intersecting cells are covered.
pub fn n_max(q: &[f64], tau: f64, m: u32, hist: &DimHistogram) -> u64 {
    let pad = hist.d_max / (1u64 << m) as f64;
    (0..q.len())
        .map(|i| hist.interval_count(i, q[i] - tau - pad, q[i] + tau + pad))
        .min()
        .unwrap_or(0)
}

/// Expected distance computations for a multiset of candidate query
/// vectors: the sum of each vector's bound times its multiplicity.
pub fn expected_cost(
    candidates: &[(&[f64], u64)],
    tau: f64,
    m: u32,
    hist: &DimHistogram,
) -> u64 {
    candidates
        .iter()
        .map(|(q, mult)| mult * n_max(q, tau, m, hist))
        .sum()
}

/// One tuning probe: a query column with resolved thresholds.
#[derive(Debug, Clone)]
pub struct WorkloadEntry {
    pub column: Column,
    pub tau: f64,
    pub t_count: usize,
}

/// A non-empty set of tuning probes.
#[derive(Debug, Clone)]
pub struct Workload {
    pub entries: Vec<WorkloadEntry>,
}

impl Workload {
    pub fn new(entries: Vec<WorkloadEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidConfig("workload is empty".into()));
        }
        Ok(Self { entries })
    }

    /// Default sampling policy: 1% of repository columns (at least 10,
    /// capped at the column count), crossed with distance thresholds of
    /// 2/4/6/8% of the maximum distance and joinability thresholds of
    /// 20/40/60/80% of the column size.
    pub fn sample(repo: &Repository, d_max: f64, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        let n_cols = repo.columns().len();
        let take = ((n_cols as f64 * 0.01).ceil() as usize)
            .max(10)
            .min(n_cols);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let picked = rand::seq::index::sample(&mut rng, n_cols, take);
        let mut entries = Vec::new();
        for ci in picked {
            let column = repo.columns()[ci].clone();
            for tau_pct in [0.02, 0.04, 0.06, 0.08] {
                for t_pct in [0.2, 0.4, 0.6, 0.8] {
                    let tau = tau_pct * d_max;
                    let raw = t_pct * column.len() as f64;
                    let t_count = (raw.ceil() as usize).clamp(1, column.len());
                    entries.push(WorkloadEntry { column: column.clone(), tau, t_count });
                }
            }
        }
        Workload::new(entries)
    }
}

/// One row of the tuning report.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneRow {
    pub m: u32,
    pub estimated_cost: u64,
    pub blocking_ms: f64,
}

/// Picks the grid depth minimizing the summed cost estimate over the
/// workload. For each depth only blocking runs (candidates are estimated,
/// never verified). Ties break toward the smaller depth.
pub fn tune_m(
    repo: &Repository,
    pivots: &PivotSet,
    workload: &Workload,
    m_range: RangeInclusive<u32>,
    hist_bins: usize,
) -> Result<(u32, Vec<TuneRow>)> {
    let metric = pivots.metric().clone();
    let d_max = metric.d_max();
    let mapped: Vec<MappedVector> = repo
        .columns()
        .iter()
        .enumerate()
        .flat_map(|(ci, col)| {
            col.vectors()
                .iter()
                .enumerate()
                .map(move |(ri, v)| (ci as u32, ri as u32, v))
        })
        .map(|(ci, ri, v)| pivots.map_vector(v, ci, ri))
        .collect();
    let hist = estimate_pdf(&mapped, hist_bins, d_max)?;

    // Queries mapped once; blocking output depends on (column, tau, m) only.
    let query_mapped: Vec<Vec<MappedVector>> = workload
        .entries
        .iter()
        .map(|e| {
            e.column
                .vectors()
                .iter()
                .enumerate()
                .map(|(ri, v)| pivots.map_vector(v, 0, ri as u32))
                .collect()
        })
        .collect();

    let ms: Vec<u32> = m_range.collect();
    if ms.is_empty() {
        return Err(Error::InvalidConfig("empty depth range".into()));
    }
    let rows: Vec<TuneRow> = ms
        .par_iter()
        .map(|&m| -> Result<TuneRow> {
            let config = GridConfig::new(pivots.len(), m, d_max)?;
            let repo_grid = build_grid(&mapped, &config, false)?;
            let started = Instant::now();
            let mut cost = 0u64;
            let mut cache: HashMap<(&str, u64), u64> = HashMap::new();
            for (ei, entry) in workload.entries.iter().enumerate() {
                let key = (entry.column.column_id.as_str(), entry.tau.to_bits());
                if let Some(&c) = cache.get(&key) {
                    cost += c;
                    continue;
                }
                let qm = &query_mapped[ei];
                let qgrid = build_grid(qm, &config, true)?;
                let blocking = block(&qgrid, qm, &repo_grid, entry.tau, false)?;
                let cands: Vec<(&[f64], u64)> = blocking
                    .candidates
                    .iter()
                    .map(|(q, _)| (qm[*q as usize].coords.as_slice(), 1))
                    .collect();
                let c = expected_cost(&cands, entry.tau, m, &hist);
                cache.insert(key, c);
                cost += c;
            }
            Ok(TuneRow {
                m,
                estimated_cost: cost,
                blocking_ms: started.elapsed().as_secs_f64() * 1e3,
            })
        })
        .collect::<Result<_>>()?;

    let mut best = &rows[0];
    for row in &rows[1..] {
        if row.estimated_cost < best.estimated_cost {
            best = row;
        }
    }
    Ok((best.m, rows))
}
