//! Exact offline optimum at desk scale.
//!
//! For a fixed partition the cheapest delay profile founds each cluster at
//! its second member's arrival: the first member waits for the second, and
//! every later member joins on arrival with zero delay. The oracle
//! enumerates all partitions matching the size specification, prices each
//! with that profile, and keeps the minimizer. A separate brute force over
//! per-cluster formation times validates the profile on tiny instances.

use thiserror::Error;

use crate::arrivals::ArrivalSequence;
use crate::clustering::{total_cost, ClusterError, CostParams, DelayProfile};
use crate::metric::MetricSpace;

/// Largest `n` the exact oracle accepts by default.
pub const DEFAULT_ENUM_CAP: usize = 12;

/// Largest `n` the schedule brute force accepts.
pub const BRUTE_FORCE_CAP: usize = 6;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance has {n} points, above the enumeration cap {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("size specification is infeasible for {n} points")]
    InfeasibleSpec { n: usize },
    #[error("offline clusters need at least two points, got {0}")]
    SingletonCluster(usize),
    #[error("partition does not cover every point exactly once")]
    NotAPartition,
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// Exact offline optimum: the minimizing partition, its delay profile, the
/// per-point minimum costs, and the certified lower bound derived from them.
#[derive(Clone, Debug)]
pub struct OracleResult {
    pub partition: Vec<Vec<usize>>,
    pub w: DelayProfile,
    pub opt_cost: f64,
    pub point_costs: Vec<f64>,
    pub point_cost_lower_bound: f64,
}

/// Cheapest delay profile for a fixed partition: per cluster, the earliest
/// member waits until the second member arrives; everyone else joins with
/// zero delay.
pub fn optimal_delay_profile(
    partition: &[Vec<usize>],
    seq: &ArrivalSequence,
) -> Result<DelayProfile, OracleError> {
    let mut w = DelayProfile::new(seq.n());
    for cluster in partition {
        if cluster.len() < 2 {
            return Err(OracleError::SingletonCluster(cluster.len()));
        }
        let mut members = cluster.clone();
        members.sort_by_key(|&i| seq.time(i));
        let founding_gap = seq.time(members[1]) - seq.time(members[0]);
        w.set(members[0], founding_gap);
        for &i in &members[1..] {
            w.set(i, 0);
        }
    }
    Ok(w)
}

/// Calls `visit` once per partition of `0..n` into groups whose sizes match
/// `sizes`. Equal-size groups are canonicalized by ascending minimal member,
/// so no partition appears twice.
pub fn for_each_partition<F: FnMut(&[Vec<usize>])>(n: usize, sizes: &[usize], mut visit: F) {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); sizes.len()];
    fn recurse<F: FnMut(&[Vec<usize>])>(
        next: usize,
        n: usize,
        sizes: &[usize],
        groups: &mut Vec<Vec<usize>>,
        visit: &mut F,
    ) {
        if next == n {
            visit(groups);
            return;
        }
        for g in 0..sizes.len() {
            if groups[g].len() == sizes[g] {
                continue;
            }
            if groups[g].is_empty() {
                // Only the first empty group of each size may be opened.
                let duplicate = (0..g).any(|h| groups[h].is_empty() && sizes[h] == sizes[g]);
                if duplicate {
                    continue;
                }
            }
            groups[g].push(next);
            recurse(next + 1, n, sizes, groups, visit);
            groups[g].pop();
        }
    }
    recurse(0, n, sizes, &mut groups, &mut visit);
}

/// Exact optimum by full partition enumeration, capped at
/// [`DEFAULT_ENUM_CAP`] points.
pub fn opt_exact(
    seq: &ArrivalSequence,
    space: &MetricSpace,
    sizes: &[usize],
    params: &CostParams,
) -> Result<OracleResult, OracleError> {
    opt_exact_with_cap(seq, space, sizes, params, DEFAULT_ENUM_CAP)
}

pub fn opt_exact_with_cap(
    seq: &ArrivalSequence,
    space: &MetricSpace,
    sizes: &[usize],
    params: &CostParams,
    cap: usize,
) -> Result<OracleResult, OracleError> {
    let n = seq.n();
    if n > cap {
        return Err(OracleError::TooLarge { n, cap });
    }
    if sizes.iter().sum::<usize>() != n || sizes.iter().any(|&s| s < 2) {
        return Err(OracleError::InfeasibleSpec { n });
    }
    let locs: Vec<usize> = seq.points().iter().map(|p| p.location).collect();
    let lam = params.lambda;
    let mut best: Option<(f64, Vec<Vec<usize>>)> = None;
    for_each_partition(n, sizes, |partition| {
        // Inline pricing with the cheapest profile: members ascend in
        // arrival order, so the first entry waits for the second and
        // everyone else has zero delay. The summation mirrors `total_cost`
        // term for term so the recomputation below reproduces it exactly.
        let mut cost = 0.0;
        for cluster in partition {
            let gap = (seq.time(cluster[1]) - seq.time(cluster[0])) as f64;
            for (a, &i) in cluster.iter().enumerate() {
                let wi = if a == 0 { gap } else { 0.0 };
                for &j in &cluster[a + 1..] {
                    cost += 2.0 * (space.dist(locs[i], locs[j]) + lam * wi);
                }
            }
        }
        // Strict comparison keeps the first partition in enumeration order
        // among cost ties.
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, partition.to_vec()));
        }
    });
    let (enumerated_cost, partition) = best.ok_or(OracleError::InfeasibleSpec { n })?;
    let w = optimal_delay_profile(&partition, seq)?;
    let opt_cost = total_cost(&partition, &locs, space, &w, params)?;
    debug_assert_eq!(opt_cost, enumerated_cost);
    let point_costs = minimum_point_costs(seq, space, &w, params);
    let min_size = sizes.iter().copied().min().unwrap_or(0);
    let point_cost_lower_bound = (min_size as f64 - 1.0) / 2.0 * point_costs.iter().sum::<f64>();
    Ok(OracleResult {
        partition,
        w,
        opt_cost,
        point_costs,
        point_cost_lower_bound,
    })
}

/// `c_i`: the cheapest connection cost point `i` could have with any other
/// point under the given delay profile.
fn minimum_point_costs(
    seq: &ArrivalSequence,
    space: &MetricSpace,
    w: &DelayProfile,
    params: &CostParams,
) -> Vec<f64> {
    let n = seq.n();
    (0..n)
        .map(|i| {
            let wi = w.get(i).unwrap_or(0) as f64;
            (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let wj = w.get(j).unwrap_or(0) as f64;
                    space.dist(seq.location(i), seq.location(j)) + params.lambda * (wi + wj)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Exhaustive schedule search for a fixed partition: every cluster may form
/// at any member arrival from the second onward, grouping all members
/// arrived by then; later members join on arrival. Returns the minimum
/// total cost. Used as a test oracle only.
pub fn brute_force_schedule_opt(
    seq: &ArrivalSequence,
    space: &MetricSpace,
    partition: &[Vec<usize>],
    params: &CostParams,
) -> Result<f64, OracleError> {
    let n = seq.n();
    if n > BRUTE_FORCE_CAP {
        return Err(OracleError::TooLarge {
            n,
            cap: BRUTE_FORCE_CAP,
        });
    }
    let mut covered = vec![false; n];
    for cluster in partition {
        for &i in cluster {
            if i >= n || covered[i] {
                return Err(OracleError::NotAPartition);
            }
            covered[i] = true;
        }
    }
    if !covered.iter().all(|&c| c) {
        return Err(OracleError::NotAPartition);
    }
    let locs: Vec<usize> = seq.points().iter().map(|p| p.location).collect();
    let mut total = 0.0;
    for cluster in partition {
        if cluster.len() < 2 {
            return Err(OracleError::SingletonCluster(cluster.len()));
        }
        let mut members = cluster.clone();
        members.sort_by_key(|&i| seq.time(i));
        let mut best = f64::INFINITY;
        for form_idx in 1..members.len() {
            let form_time = seq.time(members[form_idx]);
            let mut w = DelayProfile::new(n);
            for (pos, &i) in members.iter().enumerate() {
                if pos <= form_idx {
                    w.set(i, form_time - seq.time(i));
                } else {
                    w.set(i, 0);
                }
            }
            let cost = total_cost(std::slice::from_ref(cluster), &locs, space, &w, params)?;
            best = best.min(cost);
        }
        total += best;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrivals::{ArrivalDistribution, ArrivalSequence};
    use crate::metric::MetricSpace;
    use crate::rng::SeedStream;

    fn triangle_space() -> MetricSpace {
        MetricSpace::new(
            vec!["A".into(), "B".into(), "C".into()],
            vec![
                vec![0.0, 2.0, 2.0],
                vec![2.0, 0.0, 2.0],
                vec![2.0, 2.0, 0.0],
            ],
        )
        .unwrap()
    }

    fn walkthrough() -> (MetricSpace, ArrivalSequence) {
        let space = triangle_space();
        let seq = ArrivalSequence::parse("1 A\n3 B\n4 C", &space).unwrap();
        (space, seq)
    }

    #[test]
    fn delay_profile_founding_pair() {
        let (_, seq) = walkthrough();
        let w = optimal_delay_profile(&[vec![0, 1, 2]], &seq).unwrap();
        assert_eq!(w.get(0), Some(2));
        assert_eq!(w.get(1), Some(0));
        assert_eq!(w.get(2), Some(0));
    }

    #[test]
    fn delay_profile_pair_gap() {
        let space = triangle_space();
        let seq = ArrivalSequence::parse("5 A\n6 B", &space).unwrap();
        let w = optimal_delay_profile(&[vec![0, 1]], &seq).unwrap();
        assert_eq!(w.get(0), Some(1));
        assert_eq!(w.get(1), Some(0));
    }

    #[test]
    fn delay_profile_two_clusters_and_cost() {
        // Interleaved clusters {0,2} and {1,3} at times 1,2,3,5; distances 0.
        let space = MetricSpace::new(vec!["A".into()], vec![vec![0.0]]).unwrap();
        let seq = ArrivalSequence::parse("1 A\n2 A\n3 A\n5 A", &space).unwrap();
        let partition = vec![vec![0, 2], vec![1, 3]];
        let w = optimal_delay_profile(&partition, &seq).unwrap();
        assert_eq!(w.get(0), Some(2));
        assert_eq!(w.get(2), Some(0));
        assert_eq!(w.get(1), Some(3));
        assert_eq!(w.get(3), Some(0));
        let locs = vec![0, 0, 0, 0];
        let tc = total_cost(&partition, &locs, &space, &w, &CostParams::default()).unwrap();
        assert_eq!(tc, 10.0);
    }

    #[test]
    fn delay_profile_rejects_singletons() {
        let (_, seq) = walkthrough();
        assert!(matches!(
            optimal_delay_profile(&[vec![0], vec![1, 2]], &seq),
            Err(OracleError::SingletonCluster(1))
        ));
    }

    #[test]
    fn walkthrough_opt_is_twenty() {
        let (space, seq) = walkthrough();
        let result = opt_exact(&seq, &space, &[3], &CostParams::default()).unwrap();
        assert_eq!(result.opt_cost, 20.0);
        assert_eq!(result.partition, vec![vec![0, 1, 2]]);
        assert_eq!(result.w.get(0), Some(2));
        assert_eq!(result.point_costs, vec![4.0, 2.0, 2.0]);
        assert_eq!(result.point_cost_lower_bound, 8.0);
        assert!(result.point_cost_lower_bound <= result.opt_cost);
    }

    #[test]
    fn four_point_enumeration() {
        let space = MetricSpace::new(
            vec!["A".into(), "B".into()],
            vec![vec![0.0, 2.0], vec![2.0, 0.0]],
        )
        .unwrap();
        let seq = ArrivalSequence::parse("1 A\n2 B\n3 A\n5 B", &space).unwrap();
        let result = opt_exact(&seq, &space, &[2, 2], &CostParams::default()).unwrap();
        assert_eq!(result.opt_cost, 10.0);
        assert_eq!(result.partition, vec![vec![0, 2], vec![1, 3]]);
    }

    #[test]
    fn partition_count_matches_multinomial() {
        let mut count = 0usize;
        for_each_partition(6, &[2, 2, 2], |_| count += 1);
        assert_eq!(count, 15);
        let mut count = 0usize;
        for_each_partition(5, &[3, 2], |_| count += 1);
        assert_eq!(count, 10);
        let mut seen = std::collections::HashSet::new();
        for_each_partition(6, &[3, 3], |p| {
            let mut key: Vec<Vec<usize>> = p.to_vec();
            key.sort();
            assert!(seen.insert(key), "duplicate partition {p:?}");
        });
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn oracle_respects_cap() {
        let space = triangle_space();
        let dist = ArrivalDistribution::validate(vec![0.2; 3]).unwrap();
        let seq = ArrivalSequence::sample(&dist, 14, 1).unwrap();
        assert!(matches!(
            opt_exact(&seq, &space, &[2; 7], &CostParams::default()),
            Err(OracleError::TooLarge { n: 14, cap: 12 })
        ));
    }

    #[test]
    fn brute_force_agrees_on_walkthrough() {
        let (space, seq) = walkthrough();
        let cost = brute_force_schedule_opt(&seq, &space, &[vec![0, 1, 2]], &CostParams::default())
            .unwrap();
        assert_eq!(cost, 20.0);
    }

    #[test]
    fn brute_force_pair_forms_at_second_arrival() {
        let space = triangle_space();
        let seq = ArrivalSequence::parse("1 A\n4 B", &space).unwrap();
        let cost =
            brute_force_schedule_opt(&seq, &space, &[vec![0, 1]], &CostParams::default()).unwrap();
        let w = optimal_delay_profile(&[vec![0, 1]], &seq).unwrap();
        let tc = total_cost(&[vec![0, 1]], &[0, 1], &space, &w, &CostParams::default()).unwrap();
        assert_eq!(cost, tc);
    }

    #[test]
    fn brute_force_rejects_large_instances() {
        let space = triangle_space();
        let dist = ArrivalDistribution::validate(vec![0.2; 3]).unwrap();
        let seq = ArrivalSequence::sample(&dist, 7, 2).unwrap();
        assert!(matches!(
            brute_force_schedule_opt(
                &seq,
                &space,
                &[vec![0, 1, 2, 3, 4, 5, 6]],
                &CostParams::default()
            ),
            Err(OracleError::TooLarge { .. })
        ));
    }

    /// Sweep: the closed-form profile matches the exhaustive schedule search
    /// minimized over all partitions.
    #[test]
    fn oracle_equivalence_sweep() {
        let space = triangle_space();
        let params = CostParams::default();
        let mut rng = SeedStream::new(0xB00F);
        for _ in 0..200 {
            let n = 2 + rng.index(4); // 2..=5
            let sizes: Vec<usize> = match n {
                2 => vec![2],
                3 => vec![3],
                4 => {
                    if rng.index(2) == 0 {
                        vec![4]
                    } else {
                        vec![2, 2]
                    }
                }
                _ => {
                    if rng.index(2) == 0 {
                        vec![5]
                    } else {
                        vec![3, 2]
                    }
                }
            };
            let mut t = 0u64;
            let points: Vec<crate::arrivals::ArrivalPoint> = (0..n)
                .map(|_| {
                    t += 1 + rng.index(4) as u64;
                    crate::arrivals::ArrivalPoint {
                        location: rng.index(3),
                        time: t,
                    }
                })
                .collect();
            let seq = ArrivalSequence::new(points).unwrap();
            let exact = opt_exact(&seq, &space, &sizes, &params).unwrap();
            let mut brute_best = f64::INFINITY;
            for_each_partition(n, &sizes, |partition| {
                let cost = brute_force_schedule_opt(&seq, &space, partition, &params).unwrap();
                brute_best = brute_best.min(cost);
            });
            assert!(
                (exact.opt_cost - brute_best).abs() < 1e-9,
                "n={n} sizes={sizes:?}: exact {} vs brute {brute_best}",
                exact.opt_cost
            );
        }
    }
}
