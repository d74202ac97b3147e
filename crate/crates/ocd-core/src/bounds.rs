//! Closed-form performance bounds for the delayed-greedy engine under
//! stochastic arrivals, evaluated at finite `n`.
//!
//! All three formulas are stated for unit delay scaling and use the
//! per-location radii: the expected-cost upper bound charges each point its
//! radius plus a per-location diameter term, the expected-optimum lower
//! bound prices each point by the open-ball mass at its radius, and their
//! asymptotic quotient depends only on the extreme cluster sizes.

use serde::Serialize;
use thiserror::Error;

use crate::arrivals::ArrivalDistribution;
use crate::clustering::ClusterSizeSpec;
use crate::metric::{MetricSpace, RadiusTable};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("arrival distribution has zero total mass")]
    ZeroTotalMass,
    #[error("open ball at location {0} carries no mass")]
    ZeroBallMass(usize),
}

/// Upper bound on the engine's expected total cost over sequences of `n`
/// points: `2(s_max - 1) [n * sum_x p_x r_x + |X| d_max] + 2(s_max - 1)|X| / sum_x p_x`.
pub fn expected_cost_upper_bound(
    dist: &ArrivalDistribution,
    space: &MetricSpace,
    radii: &RadiusTable,
    n: usize,
    spec: &ClusterSizeSpec,
) -> Result<f64, BoundsError> {
    let total = dist.total_mass();
    if total <= 0.0 {
        return Err(BoundsError::ZeroTotalMass);
    }
    let size_factor = 2.0 * (spec.max_size() as f64 - 1.0);
    let weighted_radius: f64 = (0..space.len()).map(|x| dist.p(x) * radii.r[x]).sum();
    let locations = space.len() as f64;
    Ok(
        size_factor * (n as f64 * weighted_radius + locations * space.diameter())
            + size_factor * locations / total,
    )
}

/// Lower bound on the expected optimal total cost:
/// `n (s_min - 1) (1 - e^{-2}) / 4 * sum_x p_x / q_x`, with `q_x` the
/// open-ball mass at the radius of `x`.
pub fn expected_opt_lower_bound(
    dist: &ArrivalDistribution,
    radii: &RadiusTable,
    n: usize,
    spec: &ClusterSizeSpec,
) -> Result<f64, BoundsError> {
    let mut mass_ratio = 0.0;
    for x in 0..dist.len() {
        let p = dist.p(x);
        if p <= 0.0 {
            continue;
        }
        let q = radii.q[x];
        if q <= 0.0 {
            return Err(BoundsError::ZeroBallMass(x));
        }
        mass_ratio += p / q;
    }
    let coefficient = (1.0 - (-2.0f64).exp()) / 4.0;
    Ok(n as f64 * (spec.min_size() as f64 - 1.0) * coefficient * mass_ratio)
}

/// Asymptotic bound on the ratio of expectations:
/// `8 (s_max - 1) / ((s_min - 1) (1 - e^{-2}))`, which collapses to
/// `8 / (1 - e^{-2})` when all cluster sizes are equal.
pub fn ratio_of_expectations_bound(spec: &ClusterSizeSpec) -> f64 {
    8.0 * (spec.max_size() as f64 - 1.0)
        / ((spec.min_size() as f64 - 1.0) * (1.0 - (-2.0f64).exp()))
}

/// All three bounds together with the inputs they were computed from.
#[derive(Clone, Debug, Serialize)]
pub struct BoundsReport {
    pub n: usize,
    pub spec: ClusterSizeSpec,
    pub p_digest: String,
    pub cost_upper_bound: f64,
    pub opt_lower_bound: f64,
    pub ratio_bound: f64,
}

pub fn bounds_report(
    dist: &ArrivalDistribution,
    space: &MetricSpace,
    radii: &RadiusTable,
    n: usize,
    spec: &ClusterSizeSpec,
) -> Result<BoundsReport, BoundsError> {
    Ok(BoundsReport {
        n,
        spec: spec.clone(),
        p_digest: distribution_digest(dist),
        cost_upper_bound: expected_cost_upper_bound(dist, space, radii, n, spec)?,
        opt_lower_bound: expected_opt_lower_bound(dist, radii, n, spec)?,
        ratio_bound: ratio_of_expectations_bound(spec),
    })
}

/// FNV-1a over the probability bytes; identifies the distribution in
/// reports without echoing the whole vector.
pub fn distribution_digest(dist: &ArrivalDistribution) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for p in dist.probabilities() {
        for byte in p.to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    }
    format!("{hash:016x}")
}
