//! Finite metric spaces: axiom validation, repair of non-metric inputs,
//! balls, diameter, and the per-location assignment radius.
//!
//! Distances are stored as `f64` and compared exactly; only the triangle
//! check carries a small tolerance to absorb shortest-path closure rounding.

// Matrix code reads clearest with explicit indices.
#![allow(clippy::needless_range_loop)]

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::arrivals::ArrivalDistribution;

/// Tolerance used by triangle-inequality checks.
pub const TRIANGLE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("need at least one location")]
    Empty,
    #[error("distance matrix is not square: {rows} rows, row {row} has {cols} entries")]
    NotSquare {
        rows: usize,
        row: usize,
        cols: usize,
    },
    #[error("duplicate location label `{0}`")]
    DuplicateLabel(String),
    #[error("self-distance of location {0} must be a finite number")]
    NonFiniteSelfDistance(usize),
    #[error("distance from {from} to {to} is not finite")]
    NonFiniteDistance { from: usize, to: usize },
    #[error("matrix violates the metric axioms ({violations} violations); repair it first")]
    NotMetric { violations: usize },
    #[error("unknown location index {0}")]
    UnknownLocation(usize),
    #[error("arrival distribution has zero total mass")]
    ZeroMass,
}

/// An arbitrary square distance matrix, prior to any validation or repair.
/// Entries may be negative or asymmetric; NaN is rejected up front.
#[derive(Clone, Debug)]
pub struct RawSpace {
    labels: Vec<String>,
    dist: Vec<Vec<f64>>,
}

impl RawSpace {
    pub fn new(labels: Vec<String>, dist: Vec<Vec<f64>>) -> Result<Self, MetricError> {
        if labels.is_empty() {
            return Err(MetricError::Empty);
        }
        let n = labels.len();
        if dist.len() != n {
            return Err(MetricError::NotSquare {
                rows: dist.len(),
                row: 0,
                cols: n,
            });
        }
        for (i, row) in dist.iter().enumerate() {
            if row.len() != n {
                return Err(MetricError::NotSquare {
                    rows: n,
                    row: i,
                    cols: row.len(),
                });
            }
        }
        let mut seen = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            if seen.insert(l.clone(), i).is_some() {
                return Err(MetricError::DuplicateLabel(l.clone()));
            }
        }
        for (i, row) in dist.iter().enumerate() {
            if !row[i].is_finite() {
                return Err(MetricError::NonFiniteSelfDistance(i));
            }
            if row.iter().any(|d| d.is_nan()) {
                return Err(MetricError::NonFiniteDistance {
                    from: i,
                    to: row.iter().position(|d| d.is_nan()).unwrap(),
                });
            }
        }
        Ok(Self { labels, dist })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dist(&self, x: usize, y: usize) -> f64 {
        self.dist[x][y]
    }
}

/// A validated finite metric space with its diameter cached.
#[derive(Clone, Debug)]
pub struct MetricSpace {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    dist: Vec<Vec<f64>>,
    d_max: f64,
}

impl MetricSpace {
    /// Validates all metric axioms (triangle check within [`TRIANGLE_TOL`]).
    pub fn new(labels: Vec<String>, dist: Vec<Vec<f64>>) -> Result<Self, MetricError> {
        let raw = RawSpace::new(labels, dist)?;
        for (i, row) in raw.dist.iter().enumerate() {
            for (j, d) in row.iter().enumerate() {
                if !d.is_finite() {
                    return Err(MetricError::NonFiniteDistance { from: i, to: j });
                }
            }
        }
        let report = validate_space(&raw);
        if !report.is_metric() {
            return Err(MetricError::NotMetric {
                violations: report.violations.len(),
            });
        }
        Ok(Self::from_validated(raw))
    }

    fn from_validated(raw: RawSpace) -> Self {
        let d_max = raw.dist.iter().flatten().copied().fold(0.0_f64, f64::max);
        let index = raw
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Self {
            labels: raw.labels,
            index,
            dist: raw.dist,
            d_max,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, x: usize) -> &str {
        &self.labels[x]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn dist(&self, x: usize, y: usize) -> f64 {
        self.dist[x][y]
    }

    /// Maximum pairwise distance; 0 for a single location.
    pub fn diameter(&self) -> f64 {
        self.d_max
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    Negative,
    SelfDistance,
    Asymmetry,
    Triangle,
}

/// One metric-axiom violation with a concrete witness.
/// For triangle violations `via` names the intermediate location.
#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub from: usize,
    pub to: usize,
    pub via: Option<usize>,
    pub magnitude: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_metric(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Reports every metric-axiom violation; never fails.
pub fn validate_space(raw: &RawSpace) -> ValidationReport {
    let n = raw.len();
    let d = &raw.dist;
    let mut violations = Vec::new();
    for x in 0..n {
        if d[x][x] != 0.0 {
            violations.push(Violation {
                kind: ViolationKind::SelfDistance,
                from: x,
                to: x,
                via: None,
                magnitude: d[x][x].abs(),
            });
        }
    }
    for x in 0..n {
        for y in 0..n {
            if x != y && d[x][y] < 0.0 {
                violations.push(Violation {
                    kind: ViolationKind::Negative,
                    from: x,
                    to: y,
                    via: None,
                    magnitude: -d[x][y],
                });
            }
        }
    }
    for x in 0..n {
        for y in (x + 1)..n {
            if d[x][y] != d[y][x] {
                violations.push(Violation {
                    kind: ViolationKind::Asymmetry,
                    from: x,
                    to: y,
                    via: None,
                    magnitude: (d[x][y] - d[y][x]).abs(),
                });
            }
        }
    }
    for x in 0..n {
        for z in 0..n {
            if x == z {
                continue;
            }
            for y in 0..n {
                if y == x || y == z {
                    continue;
                }
                let excess = d[x][z] - (d[x][y] + d[y][z]);
                if excess > TRIANGLE_TOL {
                    violations.push(Violation {
                        kind: ViolationKind::Triangle,
                        from: x,
                        to: z,
                        via: Some(y),
                        magnitude: excess,
                    });
                }
            }
        }
    }
    ValidationReport { violations }
}

/// Turns an arbitrary raw matrix into a metric space.
///
/// Steps, applied in order: force the diagonal to zero; shift all
/// off-diagonal entries by `-min + epsilon` when any is non-positive;
/// all-pairs shortest-path closure; symmetrization `(d + d^T) / 2`.
/// The closure and symmetrization are exact no-ops on inputs that already
/// satisfy the corresponding axiom.
pub fn repair_to_metric(raw: &RawSpace, epsilon: f64) -> Result<MetricSpace, MetricError> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let n = raw.len();
    for (i, row) in raw.dist.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(MetricError::NonFiniteDistance { from: i, to: j });
            }
        }
    }
    let mut d = raw.dist.clone();
    for (x, row) in d.iter_mut().enumerate() {
        row[x] = 0.0;
    }
    if n > 1 {
        let min_off = d
            .iter()
            .enumerate()
            .flat_map(|(x, row)| {
                row.iter()
                    .enumerate()
                    .filter(move |(y, _)| *y != x)
                    .map(|(_, v)| *v)
            })
            .fold(f64::INFINITY, f64::min);
        if min_off <= 0.0 {
            for x in 0..n {
                for y in 0..n {
                    if x != y {
                        d[x][y] = d[x][y] - min_off + epsilon;
                    }
                }
            }
        }
        // Shortest-path closure on the complete directed graph.
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][k] + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        for x in 0..n {
            for y in (x + 1)..n {
                let s = (d[x][y] + d[y][x]) / 2.0;
                d[x][y] = s;
                d[y][x] = s;
            }
        }
    }
    MetricSpace::new(raw.labels.clone(), d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BallMode {
    Closed,
    Open,
}

/// Total arrival mass inside the ball around `x` of radius `r`:
/// `d <= r` in closed mode, `d < r` in open mode.
pub fn ball_mass(
    space: &MetricSpace,
    dist: &ArrivalDistribution,
    x: usize,
    r: f64,
    mode: BallMode,
) -> Result<f64, MetricError> {
    debug_assert!(r >= 0.0);
    if x >= space.len() {
        return Err(MetricError::UnknownLocation(x));
    }
    debug_assert_eq!(space.len(), dist.len());
    let mut mass = 0.0;
    for y in 0..space.len() {
        let d = space.dist(x, y);
        let inside = match mode {
            BallMode::Closed => d <= r,
            BallMode::Open => d < r,
        };
        if inside {
            mass += dist.p(y);
        }
    }
    Ok(mass)
}

/// Per-location assignment radii.
///
/// `r[x]` is the smallest radius whose closed-ball arrival mass `m`
/// satisfies `1/m <= r`; `q[x]` is the open-ball mass at that radius.
#[derive(Clone, Debug)]
pub struct RadiusTable {
    pub r: Vec<f64>,
    pub q: Vec<f64>,
}

/// Computes the exact radius for every location over the breakpoints of the
/// closed-ball mass function.
///
/// Sorting the distinct distances from `x` as `0 = d_0 < d_1 < ...`, the mass
/// is constant on each interval `[d_j, d_{j+1})`, so the minimizer is
/// `min_j max(d_j, 1/m_j)` over intervals where that value stays below the
/// next breakpoint (the last interval is unbounded).
pub fn radius_table(
    space: &MetricSpace,
    dist: &ArrivalDistribution,
) -> Result<RadiusTable, MetricError> {
    debug_assert_eq!(space.len(), dist.len());
    if dist.total_mass() <= 0.0 {
        return Err(MetricError::ZeroMass);
    }
    let n = space.len();
    let mut r = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    for x in 0..n {
        let mut by_dist: Vec<(f64, f64)> = (0..n).map(|y| (space.dist(x, y), dist.p(y))).collect();
        by_dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        // Collapse ties into breakpoints with their cumulative closed mass.
        let mut breakpoints: Vec<(f64, f64)> = Vec::new();
        let mut mass = 0.0;
        for (d, p) in by_dist {
            mass += p;
            match breakpoints.last_mut() {
                Some((last_d, last_m)) if *last_d == d => *last_m = mass,
                _ => breakpoints.push((d, mass)),
            }
        }
        let mut best = f64::INFINITY;
        for (j, &(delta, m)) in breakpoints.iter().enumerate() {
            if m <= 0.0 {
                continue;
            }
            let candidate = delta.max(1.0 / m);
            let feasible = match breakpoints.get(j + 1) {
                Some(&(next, _)) => candidate < next,
                None => true,
            };
            if feasible && candidate < best {
                best = candidate;
            }
        }
        debug_assert!(best.is_finite());
        r.push(best);
        q.push(ball_mass(space, dist, x, best, BallMode::Open)?);
    }
    Ok(RadiusTable { r, q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrivals::ArrivalDistribution;
    use proptest::prelude::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("L{i}")).collect()
    }

    /// Three locations, every pair at distance 2.
    pub(crate) fn triangle_space() -> MetricSpace {
        MetricSpace::new(
            labels(3),
            vec![
                vec![0.0, 2.0, 2.0],
                vec![2.0, 0.0, 2.0],
                vec![2.0, 2.0, 0.0],
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_location_is_metric() {
        let raw = RawSpace::new(labels(1), vec![vec![0.0]]).unwrap();
        let report = validate_space(&raw);
        assert!(report.is_metric());
    }

    #[test]
    fn asymmetry_reported_with_witness() {
        let raw = RawSpace::new(labels(2), vec![vec![0.0, 4.0], vec![2.0, 0.0]]).unwrap();
        let report = validate_space(&raw);
        assert_eq!(report.violations.len(), 1);
        let v = &report.violations[0];
        assert_eq!(v.kind, ViolationKind::Asymmetry);
        assert_eq!((v.from, v.to), (0, 1));
        assert_eq!(v.magnitude, 2.0);
    }

    #[test]
    fn triangle_violation_reported_with_witness() {
        let raw = RawSpace::new(
            labels(3),
            vec![
                vec![0.0, 1.0, 5.0],
                vec![1.0, 0.0, 1.0],
                vec![5.0, 1.0, 0.0],
            ],
        )
        .unwrap();
        let report = validate_space(&raw);
        let tri: Vec<_> = report
            .violations
            .iter()
            .filter(|v| v.kind == ViolationKind::Triangle)
            .collect();
        assert!(tri
            .iter()
            .any(|v| v.from == 0 && v.to == 2 && v.via == Some(1) && v.magnitude == 3.0));
    }

    #[test]
    fn repair_symmetrizes() {
        let raw = RawSpace::new(labels(2), vec![vec![0.0, 4.0], vec![2.0, 0.0]]).unwrap();
        let space = repair_to_metric(&raw, 1e-6).unwrap();
        assert_eq!(space.dist(0, 1), 3.0);
        assert_eq!(space.dist(1, 0), 3.0);
    }

    #[test]
    fn repair_closes_triangle() {
        let raw = RawSpace::new(
            labels(3),
            vec![
                vec![0.0, 1.0, 5.0],
                vec![1.0, 0.0, 1.0],
                vec![5.0, 1.0, 0.0],
            ],
        )
        .unwrap();
        let space = repair_to_metric(&raw, 1e-6).unwrap();
        assert_eq!(space.dist(0, 2), 2.0);
    }

    #[test]
    fn repair_is_identity_on_metric_input() {
        let m = triangle_space();
        let raw = RawSpace::new(
            m.labels().to_vec(),
            vec![
                vec![0.0, 2.0, 2.0],
                vec![2.0, 0.0, 2.0],
                vec![2.0, 2.0, 0.0],
            ],
        )
        .unwrap();
        let repaired = repair_to_metric(&raw, 1e-6).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                assert_eq!(repaired.dist(x, y), m.dist(x, y));
            }
        }
    }

    #[test]
    fn repair_rejects_non_finite() {
        let raw = RawSpace::new(labels(2), vec![vec![0.0, f64::INFINITY], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            repair_to_metric(&raw, 1e-6),
            Err(MetricError::NonFiniteDistance { .. })
        ));
    }

    #[test]
    fn diameter_values() {
        assert_eq!(triangle_space().diameter(), 2.0);
        let single = MetricSpace::new(labels(1), vec![vec![0.0]]).unwrap();
        assert_eq!(single.diameter(), 0.0);
        // Line metric with distances {1, 2, 7}? A 3-point line 0-1-2 with
        // d(0,1)=1, d(1,2)=6, d(0,2)=7 keeps the triangle inequality tight.
        let line = MetricSpace::new(
            labels(3),
            vec![
                vec![0.0, 1.0, 7.0],
                vec![1.0, 0.0, 6.0],
                vec![7.0, 6.0, 0.0],
            ],
        )
        .unwrap();
        assert_eq!(line.diameter(), 7.0);
    }

    fn uniform(n: usize, p: f64) -> ArrivalDistribution {
        ArrivalDistribution::validate(vec![p; n]).unwrap()
    }

    #[test]
    fn ball_mass_examples() {
        let space = triangle_space();
        let dist = uniform(3, 0.2);
        let closed = ball_mass(&space, &dist, 0, 2.0, BallMode::Closed).unwrap();
        assert!((closed - 0.6).abs() < 1e-12);
        let open = ball_mass(&space, &dist, 0, 2.0, BallMode::Open).unwrap();
        assert!((open - 0.2).abs() < 1e-12);
        let zero = ball_mass(&space, &dist, 1, 0.0, BallMode::Closed).unwrap();
        assert!((zero - 0.2).abs() < 1e-12);
    }

    #[test]
    fn ball_mass_unknown_location() {
        let space = triangle_space();
        let dist = uniform(3, 0.2);
        assert!(matches!(
            ball_mass(&space, &dist, 9, 1.0, BallMode::Closed),
            Err(MetricError::UnknownLocation(9))
        ));
    }

    #[test]
    fn radius_single_location() {
        let space = MetricSpace::new(labels(1), vec![vec![0.0]]).unwrap();
        let dist = uniform(1, 1.0);
        let table = radius_table(&space, &dist).unwrap();
        assert_eq!(table.r[0], 1.0);
        assert_eq!(table.q[0], 1.0);
    }

    #[test]
    fn radius_two_far_locations() {
        let space = MetricSpace::new(labels(2), vec![vec![0.0, 10.0], vec![10.0, 0.0]]).unwrap();
        let dist = uniform(2, 0.5);
        let table = radius_table(&space, &dist).unwrap();
        assert_eq!(table.r[0], 2.0);
        assert_eq!(table.q[0], 0.5);
    }

    #[test]
    fn radius_triangle_uniform() {
        let space = triangle_space();
        let dist = uniform(3, 0.2);
        let table = radius_table(&space, &dist).unwrap();
        for x in 0..3 {
            assert_eq!(table.r[x], 2.0);
            assert!((table.q[x] - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn radius_zero_mass_errors() {
        let space = triangle_space();
        let dist = ArrivalDistribution::validate(vec![0.0; 3]).unwrap();
        assert!(matches!(
            radius_table(&space, &dist),
            Err(MetricError::ZeroMass)
        ));
    }

    /// Independent check of the radius: scan every candidate value
    /// (breakpoints and reciprocal masses) against the defining condition.
    fn naive_radius(space: &MetricSpace, dist: &ArrivalDistribution, x: usize) -> f64 {
        let mut candidates: Vec<f64> = Vec::new();
        for y in 0..space.len() {
            let d = space.dist(x, y);
            candidates.push(d);
            let m = ball_mass(space, dist, x, d, BallMode::Closed).unwrap();
            if m > 0.0 {
                candidates.push(1.0 / m);
            }
        }
        candidates
            .into_iter()
            .filter(|&r| {
                r >= 0.0 && {
                    let m = ball_mass(space, dist, x, r, BallMode::Closed).unwrap();
                    m > 0.0 && 1.0 / m <= r
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    proptest! {
        #[test]
        fn repaired_spaces_are_metric(n in 2usize..6, seed in 0u64..500) {
            let mut rng = crate::rng::SeedStream::new(seed);
            let dist: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.unit_f64() * 8.0 - 2.0).collect())
                .collect();
            let raw = RawSpace::new(labels(n), dist).unwrap();
            let space = repair_to_metric(&raw, 1e-6).unwrap();
            let check = RawSpace::new(
                space.labels().to_vec(),
                (0..n).map(|x| (0..n).map(|y| space.dist(x, y)).collect()).collect(),
            ).unwrap();
            prop_assert!(validate_space(&check).is_metric());
        }

        #[test]
        fn closure_never_increases_and_is_idempotent(n in 2usize..6, seed in 0u64..200) {
            let mut rng = crate::rng::SeedStream::new(seed);
            let dist: Vec<Vec<f64>> = (0..n)
                .map(|x| (0..n).map(|y| if x == y { 0.0 } else { 0.1 + rng.unit_f64() * 5.0 }).collect())
                .collect();
            let raw = RawSpace::new(labels(n), dist.clone()).unwrap();
            let once = repair_to_metric(&raw, 1e-6).unwrap();
            for x in 0..n {
                for y in 0..n {
                    let sym = (dist[x][y] + dist[y][x]) / 2.0;
                    prop_assert!(once.dist(x, y) <= sym + 1e-12);
                }
            }
            let again_raw = RawSpace::new(
                once.labels().to_vec(),
                (0..n).map(|x| (0..n).map(|y| once.dist(x, y)).collect()).collect(),
            ).unwrap();
            let twice = repair_to_metric(&again_raw, 1e-6).unwrap();
            for x in 0..n {
                for y in 0..n {
                    prop_assert!((twice.dist(x, y) - once.dist(x, y)).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn radius_matches_naive_scan_and_bounds(n in 1usize..6, seed in 0u64..500) {
            let mut rng = crate::rng::SeedStream::new(seed);
            let dist: Vec<Vec<f64>> = (0..n)
                .map(|x| (0..n).map(|y| if x == y { 0.0 } else { 0.1 + rng.unit_f64() * 5.0 }).collect())
                .collect();
            let raw = RawSpace::new(labels(n), dist).unwrap();
            let space = repair_to_metric(&raw, 1e-6).unwrap();
            let mut p: Vec<f64> = (0..n).map(|_| rng.unit_f64()).collect();
            let total: f64 = p.iter().sum();
            let scale = rng.unit_f64().max(0.05) / total.max(1e-12);
            for v in &mut p {
                *v *= scale;
            }
            let dist = ArrivalDistribution::validate(p.clone()).unwrap();
            let table = radius_table(&space, &dist).unwrap();
            for x in 0..n {
                let naive = naive_radius(&space, &dist, x);
                prop_assert!((table.r[x] - naive).abs() < 1e-9, "r[{x}]={} naive={naive}", table.r[x]);
                prop_assert!(table.r[x] > 0.0);
                if p[x] > 0.0 {
                    prop_assert!(table.r[x] <= 1.0 / p[x] + 1e-12);
                    prop_assert!(table.q[x] >= p[x] - 1e-12);
                }
                // Minimality: the condition fails at every breakpoint below r[x].
                for y in 0..n {
                    let bp = space.dist(x, y);
                    if bp < table.r[x] {
                        let m = ball_mass(&space, &dist, x, bp, BallMode::Closed).unwrap();
                        prop_assert!(m <= 0.0 || 1.0 / m > bp);
                    }
                }
            }
        }

        #[test]
        fn ball_mass_monotone(seed in 0u64..200, r1 in 0.0f64..6.0, r2 in 0.0f64..6.0) {
            let space = triangle_space();
            let mut rng = crate::rng::SeedStream::new(seed);
            let p: Vec<f64> = (0..3).map(|_| rng.unit_f64() / 3.0).collect();
            let dist = ArrivalDistribution::validate(p).unwrap();
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            for mode in [BallMode::Closed, BallMode::Open] {
                let a = ball_mass(&space, &dist, 0, lo, mode).unwrap();
                let b = ball_mass(&space, &dist, 0, hi, mode).unwrap();
                prop_assert!(a <= b + 1e-15);
            }
            let open = ball_mass(&space, &dist, 0, r1, BallMode::Open).unwrap();
            let closed = ball_mass(&space, &dist, 0, r1, BallMode::Closed).unwrap();
            prop_assert!(open <= closed + 1e-15);
        }
    }
}
