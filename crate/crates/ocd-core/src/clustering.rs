//! Cluster state, size specifications, delay profiles, and the total-cost
//! objective.
//!
//! The total cost sums, over every ordered pair of distinct points sharing a
//! cluster, the distance between their locations plus both scaled waiting
//! times. Each unordered pair therefore counts twice.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::MetricSpace;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("size specification is empty")]
    EmptySpec,
    #[error("cluster sizes must be listed in non-increasing order")]
    UnsortedSizes,
    #[error(
        "cluster size {0} is below the minimum of 2 (use the degenerate constructor for fixtures)"
    )]
    SizeTooSmall(usize),
    #[error("need at least 2 clusters (use the degenerate constructor for fixtures)")]
    TooFewClusters,
    #[error("interval bounds ({lower}, {upper}) are inverted")]
    InvertedInterval { lower: usize, upper: usize },
    #[error("point {0} is already assigned")]
    AlreadyAssigned(usize),
    #[error("slot {slot} would exceed its capacity {cap}")]
    CapacityExceeded { slot: usize, cap: usize },
    #[error("point {0} has no delay entry")]
    MissingDelay(usize),
    #[error("location index {0} out of range")]
    UnknownLocation(usize),
    #[error("cannot validate a clustering with unassigned points")]
    UnassignedPoints,
}

/// Delay scaling. Distances are never scaled; every waiting time is
/// multiplied by `lambda` wherever it enters a cost or a comparison.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CostParams {
    pub lambda: f64,
}

impl CostParams {
    pub fn new(lambda: f64) -> Result<Self, ClusterError> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(ClusterError::NonPositiveLambda(lambda));
        }
        Ok(Self { lambda })
    }
}

impl Default for CostParams {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

/// Required final cluster sizes: either exact per-slot sizes or per-slot
/// intervals. Slot identity matters; the m-th slot is bound to the m-th
/// entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSizeSpec {
    Fixed(Vec<usize>),
    Interval(Vec<(usize, usize)>),
}

impl ClusterSizeSpec {
    /// Exact sizes, non-increasing, each at least 2, at least 2 clusters.
    pub fn fixed(sizes: Vec<usize>) -> Result<Self, ClusterError> {
        Self::check_sorted(&sizes)?;
        if sizes.len() < 2 {
            return Err(ClusterError::TooFewClusters);
        }
        if let Some(&s) = sizes.iter().find(|&&s| s < 2) {
            return Err(ClusterError::SizeTooSmall(s));
        }
        Ok(Self::Fixed(sizes))
    }

    /// Accepts single clusters and unit sizes; intended for test fixtures.
    pub fn fixed_degenerate(sizes: Vec<usize>) -> Result<Self, ClusterError> {
        Self::check_sorted(&sizes)?;
        if let Some(&s) = sizes.iter().find(|&&s| s < 1) {
            return Err(ClusterError::SizeTooSmall(s));
        }
        Ok(Self::Fixed(sizes))
    }

    pub fn interval(bounds: Vec<(usize, usize)>) -> Result<Self, ClusterError> {
        if bounds.is_empty() {
            return Err(ClusterError::EmptySpec);
        }
        for &(l, u) in &bounds {
            if l < 2 {
                return Err(ClusterError::SizeTooSmall(l));
            }
            if l > u {
                return Err(ClusterError::InvertedInterval { lower: l, upper: u });
            }
        }
        Ok(Self::Interval(bounds))
    }

    fn check_sorted(sizes: &[usize]) -> Result<(), ClusterError> {
        if sizes.is_empty() {
            return Err(ClusterError::EmptySpec);
        }
        if sizes.windows(2).any(|w| w[0] < w[1]) {
            return Err(ClusterError::UnsortedSizes);
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        match self {
            Self::Fixed(s) => s.len(),
            Self::Interval(b) => b.len(),
        }
    }

    /// Largest admissible cluster size (upper bound for intervals).
    pub fn max_size(&self) -> usize {
        match self {
            Self::Fixed(s) => s.iter().copied().max().unwrap_or(0),
            Self::Interval(b) => b.iter().map(|&(_, u)| u).max().unwrap_or(0),
        }
    }

    /// Smallest admissible cluster size (lower bound for intervals).
    pub fn min_size(&self) -> usize {
        match self {
            Self::Fixed(s) => s.iter().copied().min().unwrap_or(0),
            Self::Interval(b) => b.iter().map(|&(l, _)| l).min().unwrap_or(0),
        }
    }

    pub fn feasible_for(&self, n: usize) -> bool {
        match self {
            Self::Fixed(s) => s.iter().sum::<usize>() == n,
            Self::Interval(b) => {
                let lo: usize = b.iter().map(|&(l, _)| l).sum();
                let hi: usize = b.iter().map(|&(_, u)| u).sum();
                lo <= n && n <= hi
            }
        }
    }
}

/// Evolving cluster slots and assignment times for `n` points.
#[derive(Clone, Debug)]
pub struct ClusteringState {
    slots: Vec<Vec<usize>>,
    assign_time: Vec<Option<u64>>,
}

impl ClusteringState {
    pub fn new(k: usize, n: usize) -> Self {
        Self {
            slots: vec![Vec::new(); k],
            assign_time: vec![None; n],
        }
    }

    pub fn k(&self) -> usize {
        self.slots.len()
    }

    pub fn n(&self) -> usize {
        self.assign_time.len()
    }

    pub fn slot(&self, m: usize) -> &[usize] {
        &self.slots[m]
    }

    pub fn slots(&self) -> &[Vec<usize>] {
        &self.slots
    }

    pub fn assign_time(&self, point: usize) -> Option<u64> {
        self.assign_time[point]
    }

    pub fn is_assigned(&self, point: usize) -> bool {
        self.assign_time[point].is_some()
    }

    pub fn assigned_count(&self) -> usize {
        self.assign_time.iter().filter(|t| t.is_some()).count()
    }

    pub fn all_assigned(&self) -> bool {
        self.assign_time.iter().all(|t| t.is_some())
    }

    /// Irrevocably places a point into a slot at time `t`.
    pub fn assign(
        &mut self,
        point: usize,
        slot: usize,
        t: u64,
        cap: usize,
    ) -> Result<(), ClusterError> {
        if self.assign_time[point].is_some() {
            return Err(ClusterError::AlreadyAssigned(point));
        }
        if self.slots[slot].len() + 1 > cap {
            return Err(ClusterError::CapacityExceeded { slot, cap });
        }
        self.slots[slot].push(point);
        self.assign_time[point] = Some(t);
        Ok(())
    }
}

/// Waiting times `w_i = s_i - t_i`, defined only for assigned points.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DelayProfile {
    w: Vec<Option<u64>>,
}

impl DelayProfile {
    pub fn new(n: usize) -> Self {
        Self { w: vec![None; n] }
    }

    pub fn from_values(w: Vec<u64>) -> Self {
        Self {
            w: w.into_iter().map(Some).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn get(&self, point: usize) -> Option<u64> {
        self.w.get(point).copied().flatten()
    }

    pub fn set(&mut self, point: usize, w: u64) {
        self.w[point] = Some(w);
    }

    /// Sum of all defined waiting times.
    pub fn sum(&self) -> u64 {
        self.w.iter().flatten().sum()
    }

    pub fn values(&self) -> impl Iterator<Item = Option<u64>> + '_ {
        self.w.iter().copied()
    }
}

/// Total cost of a clustering: for every ordered pair of distinct points in
/// the same cluster, `d(l_i, l_j) + lambda*w_i + lambda*w_j`.
pub fn total_cost(
    clusters: &[Vec<usize>],
    locs: &[usize],
    space: &MetricSpace,
    w: &DelayProfile,
    params: &CostParams,
) -> Result<f64, ClusterError> {
    let mut tc = 0.0;
    for cluster in clusters {
        for (a, &i) in cluster.iter().enumerate() {
            for &j in &cluster[a + 1..] {
                tc += 2.0 * pair_cost(i, j, locs, space, w, params)?;
            }
        }
    }
    Ok(tc)
}

fn pair_cost(
    i: usize,
    j: usize,
    locs: &[usize],
    space: &MetricSpace,
    w: &DelayProfile,
    params: &CostParams,
) -> Result<f64, ClusterError> {
    let li = *locs.get(i).ok_or(ClusterError::UnknownLocation(i))?;
    let lj = *locs.get(j).ok_or(ClusterError::UnknownLocation(j))?;
    if li >= space.len() {
        return Err(ClusterError::UnknownLocation(li));
    }
    if lj >= space.len() {
        return Err(ClusterError::UnknownLocation(lj));
    }
    let wi = w.get(i).ok_or(ClusterError::MissingDelay(i))?;
    let wj = w.get(j).ok_or(ClusterError::MissingDelay(j))?;
    Ok(space.dist(li, lj) + params.lambda * (wi as f64) + params.lambda * (wj as f64))
}

/// Cost increase from adding `addition` (points with their hypothetical
/// waiting times) to the slot currently holding `members`. Only the new
/// pairs are counted: addition-to-member pairs and pairs inside the
/// addition itself.
pub fn insertion_delta(
    members: &[usize],
    addition: &[(usize, u64)],
    locs: &[usize],
    space: &MetricSpace,
    w: &DelayProfile,
    params: &CostParams,
    cap: usize,
) -> Result<f64, ClusterError> {
    if members.len() + addition.len() > cap {
        return Err(ClusterError::CapacityExceeded { slot: 0, cap });
    }
    let lam = params.lambda;
    let mut delta = 0.0;
    for &(i, wi) in addition {
        let li = *locs.get(i).ok_or(ClusterError::UnknownLocation(i))?;
        for &j in members {
            let lj = *locs.get(j).ok_or(ClusterError::UnknownLocation(j))?;
            let wj = w.get(j).ok_or(ClusterError::MissingDelay(j))?;
            delta += 2.0 * (space.dist(li, lj) + lam * (wi as f64) + lam * (wj as f64));
        }
    }
    for (a, &(i, wi)) in addition.iter().enumerate() {
        let li = *locs.get(i).ok_or(ClusterError::UnknownLocation(i))?;
        for &(j, wj) in &addition[a + 1..] {
            let lj = *locs.get(j).ok_or(ClusterError::UnknownLocation(j))?;
            delta += 2.0 * (space.dist(li, lj) + lam * (wi as f64) + lam * (wj as f64));
        }
    }
    Ok(delta)
}

/// Checks the final slot sizes against the specification. Slot order is
/// bound to the specification order.
pub fn validate_final(
    state: &ClusteringState,
    spec: &ClusterSizeSpec,
) -> Result<bool, ClusterError> {
    if !state.all_assigned() {
        return Err(ClusterError::UnassignedPoints);
    }
    Ok(match spec {
        ClusterSizeSpec::Fixed(sizes) => {
            sizes.len() == state.k()
                && state
                    .slots()
                    .iter()
                    .zip(sizes)
                    .all(|(slot, &s)| slot.len() == s)
        }
        ClusterSizeSpec::Interval(bounds) => {
            bounds.len() == state.k()
                && state
                    .slots()
                    .iter()
                    .zip(bounds)
                    .all(|(slot, &(l, u))| l <= slot.len() && slot.len() <= u)
        }
    })
}

/// Certificate that the total cost is delay-dominated: counting each
/// unordered pair once, the cost is at most `2 (s_max - 1) * lambda * sum w`.
/// Holds whenever every within-cluster pair satisfies
/// `d <= lambda * (w_i + w_j)`.
pub fn delay_dominated_bound(tc: f64, max_size: usize, lambda: f64, sum_w: u64) -> bool {
    tc / 2.0 <= 2.0 * (max_size as f64 - 1.0) * lambda * sum_w as f64
}
