//! Exhaustive search: the ground-truth oracle and the naive baseline.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::params::{JoinResult, SearchParams, SearchStats};
use crate::vector::{Column, Repository};

/// Joinability of `target` to `query`: the fraction of query records with
/// at least one matching record in the target column. Asymmetric; duplicate
/// query records each count.
pub fn joinability(
    query: &Column,
    target: &Column,
    metric: &dyn Metric,
    tau: f64,
) -> Result<f64> {
    if query.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: query.dim(),
            got: target.dim(),
        });
    }
    let mut matched = 0usize;
    for q in query.vectors() {
        let hit = target
            .vectors()
            .iter()
            .any(|x| metric.distance(q.coords(), x.coords()) <= tau);
        if hit {
            matched += 1;
        }
    }
    Ok(matched as f64 / query.len() as f64)
}

/// Exhaustive joinable-column search.
///
/// With `early_accept` disabled this is the oracle: every query-target pair
/// is evaluated and every matching pair is reported, so
/// `stats.distance_computations == |Q| * sum(|S|)`. With it enabled, a
/// column is accepted as soon as `t_count` query records have matched and a
/// query record stops scanning a column at its first match.
pub fn brute_force_search(
    repo: &Repository,
    query: &Column,
    params: &SearchParams,
    metric: &dyn Metric,
    early_accept: bool,
) -> Result<JoinResult> {
    if query.dim() != repo.dim() {
        return Err(Error::DimensionMismatch {
            expected: repo.dim(),
            got: query.dim(),
        });
    }
    if params.t_count > query.len() {
        return Err(Error::InvalidThreshold(format!(
            "t_count = {} exceeds the query size {}",
            params.t_count,
            query.len()
        )));
    }

    let mut stats = SearchStats::default();
    let mut joinable = Vec::new();
    let mut mappings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();

    for col in repo.columns() {
        let mut matched_records = 0usize;
        let mut pairs = Vec::new();
        'query: for (qi, q) in query.vectors().iter().enumerate() {
            let mut hit = false;
            for (xi, x) in col.vectors().iter().enumerate() {
                let d = metric.distance(q.coords(), x.coords());
                stats.distance_computations += 1;
                if d <= params.tau {
                    pairs.push((qi as u32, xi as u32));
                    if !hit {
                        hit = true;
                        matched_records += 1;
                    }
                    if early_accept {
                        // One match decides this query record.
                        break;
                    }
                }
            }
            if early_accept && matched_records >= params.t_count {
                stats.columns_early_accepted += 1;
                break 'query;
            }
        }
        if matched_records >= params.t_count {
            joinable.push(col.column_id.clone());
            mappings.insert(col.column_id.clone(), pairs);
        }
    }

    joinable.sort();
    Ok(JoinResult {
        joinable,
        mappings,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Euclidean;
    use crate::vector::Vector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn col(id: &str, pts: &[&[f64]]) -> Column {
        let vs = pts
            .iter()
            .map(|p| Vector::new(p.to_vec()).unwrap())
            .collect();
        Column::new(id, "t", vs).unwrap()
    }

    fn random_column(rng: &mut ChaCha8Rng, id: &str, n: usize, dim: usize) -> Column {
        let vs = (0..n)
            .map(|_| {
                Vector::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
            })
            .collect();
        Column::new(id, "t", vs).unwrap()
    }

    #[test]
    fn joinability_of_column_with_itself_is_one() {
        let c = col("a", &[&[0.1, 0.2], &[0.5, 0.5], &[0.5, 0.5]]);
        assert_eq!(joinability(&c, &c, &Euclidean, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn joinability_zero_when_all_pairs_exceed_tau() {
        let q = col("q", &[&[0.0, 0.0]]);
        let s = col("s", &[&[1.0, 1.0]]);
        assert_eq!(joinability(&q, &s, &Euclidean, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn joinability_equals_nested_loop_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_column(&mut rng, "q", 20, 4);
        let s = random_column(&mut rng, "s", 20, 4);
        let tau = 0.8;
        // Independent nested-loop oracle over all pairs.
        let mut matched = 0;
        for qv in q.vectors() {
            let mut any = false;
            for sv in s.vectors() {
                let mut acc = 0.0;
                for i in 0..4 {
                    acc += (qv.coords()[i] - sv.coords()[i]).powi(2);
                }
                if acc.sqrt() <= tau {
                    any = true;
                }
            }
            if any {
                matched += 1;
            }
        }
        let expect = matched as f64 / 20.0;
        assert_eq!(joinability(&q, &s, &Euclidean, tau).unwrap(), expect);
    }

    #[test]
    fn joinability_monotone_in_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_column(&mut rng, "q", 15, 3);
        let s = random_column(&mut rng, "s", 15, 3);
        let mut last = 0.0;
        for step in 0..20 {
            let tau = step as f64 * 0.1;
            let j = joinability(&q, &s, &Euclidean, tau).unwrap();
            assert!(j >= last);
            assert!((0.0..=1.0).contains(&j));
            last = j;
        }
    }

    #[test]
    fn self_join_returns_query_column() {
        let c = col("only", &[&[0.1, 0.9], &[0.4, 0.6]]);
        let repo = Repository::new(vec![c.clone()]).unwrap();
        let params = SearchParams { tau: 0.0, t_count: 2 };
        let r = brute_force_search(&repo, &c, &params, &Euclidean, false).unwrap();
        assert_eq!(r.joinable, vec!["only".to_string()]);
    }

    #[test]
    fn empty_result_when_tau_below_min_distance() {
        let q = col("q", &[&[0.0, 0.0]]);
        let s1 = col("s1", &[&[1.0, 0.0]]);
        let s2 = col("s2", &[&[0.0, 1.0]]);
        let repo = Repository::new(vec![s1, s2]).unwrap();
        let params = SearchParams { tau: 0.5, t_count: 1 };
        let r = brute_force_search(&repo, &q, &params, &Euclidean, false).unwrap();
        assert!(r.joinable.is_empty());
        assert_eq!(r.stats.distance_computations, 2);
    }

    #[test]
    fn matches_independent_double_loop_checker() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cols: Vec<Column> = (0..50)
            .map(|i| {
                let n = rng.gen_range(3..12);
                random_column(&mut rng, &format!("c{i:02}"), n, 3)
            })
            .collect();
        let repo = Repository::new(cols.clone()).unwrap();
        let query = random_column(&mut rng, "q", 10, 3);
        let params = SearchParams { tau: 0.9, t_count: 4 };

        let r = brute_force_search(&repo, &query, &params, &Euclidean, false).unwrap();

        // Independent re-implementation: per column, count query records
        // with a match using plain index arithmetic.
        let mut expect: Vec<String> = Vec::new();
        for c in &cols {
            let mut count = 0;
            for qv in query.vectors() {
                let mut any = false;
                for sv in c.vectors() {
                    let d2: f64 = qv
                        .coords()
                        .iter()
                        .zip(sv.coords())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    if d2.sqrt() <= params.tau {
                        any = true;
                        break;
                    }
                }
                if any {
                    count += 1;
                }
            }
            if count >= params.t_count {
                expect.push(c.column_id.clone());
            }
        }
        expect.sort();
        assert_eq!(r.joinable, expect);

        // Oracle mode counts every pair.
        let total: usize = cols.iter().map(|c| c.len()).sum();
        assert_eq!(r.stats.distance_computations, (query.len() * total) as u64);
    }

    #[test]
    fn invariant_under_column_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut cols: Vec<Column> = (0..12)
            .map(|i| random_column(&mut rng, &format!("c{i:02}"), 6, 3))
            .collect();
        let query = random_column(&mut rng, "q", 8, 3);
        let params = SearchParams { tau: 0.8, t_count: 2 };
        let a = brute_force_search(
            &Repository::new(cols.clone()).unwrap(),
            &query,
            &params,
            &Euclidean,
            false,
        )
        .unwrap();
        cols.reverse();
        let b = brute_force_search(
            &Repository::new(cols).unwrap(),
            &query,
            &params,
            &Euclidean,
            false,
        )
        .unwrap();
        assert_eq!(a.joinable, b.joinable);
        assert_eq!(a.mappings, b.mappings);
    }

    #[test]
    fn early_accept_preserves_result_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for trial in 0..10 {
            let cols: Vec<Column> = (0..10)
                .map(|i| random_column(&mut rng, &format!("c{i:02}"), 8, 3))
                .collect();
            let repo = Repository::new(cols).unwrap();
            let query = random_column(&mut rng, "q", 6, 3);
            let params = SearchParams {
                tau: 0.5 + 0.1 * (trial % 4) as f64,
                t_count: 1 + trial % 4,
            };
            let full = brute_force_search(&repo, &query, &params, &Euclidean, false).unwrap();
            let fast = brute_force_search(&repo, &query, &params, &Euclidean, true).unwrap();
            assert_eq!(full.joinable, fast.joinable);
            assert!(fast.stats.distance_computations <= full.stats.distance_computations);
        }
    }

    #[test]
    fn larger_tau_pct_never_shrinks_result() {
        use crate::params::resolve_thresholds;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cols: Vec<Column> = (0..10)
            .map(|i| {
                let c = random_column(&mut rng, &format!("c{i:02}"), 8, 4);
                c.normalized().unwrap()
            })
            .collect();
        let repo = Repository::new(cols).unwrap();
        let query = random_column(&mut rng, "q", 8, 4).normalized().unwrap();
        let mut prev: Option<Vec<String>> = None;
        for pct in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let (tau, t_count) = resolve_thresholds(pct, 0.5, query.len(), &Euclidean).unwrap();
            let params = SearchParams { tau, t_count };
            let r = brute_force_search(&repo, &query, &params, &Euclidean, false).unwrap();
            if let Some(p) = &prev {
                for id in p {
                    assert!(r.joinable.contains(id));
                }
            }
            prev = Some(r.joinable);
        }
    }
}
