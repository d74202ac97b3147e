//! Arrival model: per-location probabilities and concrete timed sequences.
//!
//! Time is discrete. At each integer step exactly one location receives a
//! point with its own probability, or no point arrives with the leftover
//! probability. No two points ever share an arrival time.

use thiserror::Error;

use crate::metric::MetricSpace;
use crate::rng::SeedStream;

/// Slack allowed on the total-mass check; absorbs decimal-literal rounding.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ArrivalError {
    #[error("probability at index {0} is negative")]
    NegativeMass(usize),
    #[error("probabilities sum to {0}, which exceeds 1")]
    MassExceedsOne(f64),
    #[error("cannot sample arrivals from a distribution with zero total mass")]
    ZeroTotalMass,
    #[error("line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("duplicate or non-increasing arrival time {time} on line {line}")]
    DuplicateTime { line: usize, time: u64 },
    #[error("unknown location label `{0}`")]
    UnknownLocation(String),
    #[error("subset has zero arrival mass")]
    EmptySubsetMass,
}

/// Per-location arrival probabilities with total mass at most one.
#[derive(Clone, Debug)]
pub struct ArrivalDistribution {
    p: Vec<f64>,
}

impl ArrivalDistribution {
    pub fn validate(p: Vec<f64>) -> Result<Self, ArrivalError> {
        if let Some(i) = p.iter().position(|v| *v < 0.0 || v.is_nan()) {
            return Err(ArrivalError::NegativeMass(i));
        }
        let total: f64 = p.iter().sum();
        if total > 1.0 + MASS_TOL {
            return Err(ArrivalError::MassExceedsOne(total));
        }
        Ok(Self { p })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn p(&self, x: usize) -> f64 {
        self.p[x]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn total_mass(&self) -> f64 {
        self.p.iter().sum()
    }
}

/// One timed point: where and when it arrived.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArrivalPoint {
    pub location: usize,
    pub time: u64,
}

/// A concrete sequence of `n` points with strictly increasing arrival times.
/// Points are indexed `0..n` in arrival order; external formats render the
/// index plus one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArrivalSequence {
    points: Vec<ArrivalPoint>,
}

impl ArrivalSequence {
    pub fn new(points: Vec<ArrivalPoint>) -> Result<Self, ArrivalError> {
        for (i, pair) in points.windows(2).enumerate() {
            if pair[1].time <= pair[0].time {
                return Err(ArrivalError::DuplicateTime {
                    line: i + 2,
                    time: pair[1].time,
                });
            }
        }
        if points.iter().any(|p| p.time == 0) {
            return Err(ArrivalError::ParseError {
                line: 0,
                msg: "arrival times start at 1".into(),
            });
        }
        Ok(Self { points })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Time of the last arrival; 0 for an empty sequence.
    pub fn horizon(&self) -> u64 {
        self.points.last().map_or(0, |p| p.time)
    }

    pub fn time(&self, i: usize) -> u64 {
        self.points[i].time
    }

    pub fn location(&self, i: usize) -> usize {
        self.points[i].location
    }

    pub fn points(&self) -> &[ArrivalPoint] {
        &self.points
    }

    /// Points that have arrived by time `t`, i.e. the prefix with `t_i <= t`.
    pub fn arrived_by(&self, t: u64) -> usize {
        self.points.partition_point(|p| p.time <= t)
    }

    /// Draws a sequence of `n` points from the distribution.
    ///
    /// Each step consumes one uniform variate; the location is chosen by a
    /// cumulative scan in the instance's location order, which keeps the
    /// output stable across platforms for a fixed seed.
    pub fn sample(dist: &ArrivalDistribution, n: usize, seed: u64) -> Result<Self, ArrivalError> {
        Self::sample_with_stream(dist, n, &mut SeedStream::new(seed))
    }

    pub fn sample_with_stream(
        dist: &ArrivalDistribution,
        n: usize,
        stream: &mut SeedStream,
    ) -> Result<Self, ArrivalError> {
        assert!(n >= 1, "need at least one point");
        if dist.total_mass() <= 0.0 {
            return Err(ArrivalError::ZeroTotalMass);
        }
        let mut points = Vec::with_capacity(n);
        let mut t = 0u64;
        while points.len() < n {
            t += 1;
            let u = stream.unit_f64();
            let mut cum = 0.0;
            for x in 0..dist.len() {
                cum += dist.p(x);
                if u < cum {
                    points.push(ArrivalPoint {
                        location: x,
                        time: t,
                    });
                    break;
                }
            }
        }
        Ok(Self { points })
    }

    /// Parses the line format `"<time> <label>"`, one point per line.
    pub fn parse(text: &str, space: &MetricSpace) -> Result<Self, ArrivalError> {
        let mut points = Vec::new();
        let mut last_time = 0u64;
        let mut saw_line = false;
        for (lineno, line) in text.lines().enumerate() {
            let line_number = lineno + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            saw_line = true;
            let mut parts = line.split_whitespace();
            let (t_str, label) = match (parts.next(), parts.next(), parts.next()) {
                (Some(t), Some(l), None) => (t, l),
                _ => {
                    return Err(ArrivalError::ParseError {
                        line: line_number,
                        msg: "expected `<time> <label>`".into(),
                    })
                }
            };
            let time: u64 = t_str.parse().map_err(|_| ArrivalError::ParseError {
                line: line_number,
                msg: format!("invalid time `{t_str}`"),
            })?;
            if time == 0 {
                return Err(ArrivalError::ParseError {
                    line: line_number,
                    msg: "arrival times start at 1".into(),
                });
            }
            if time <= last_time {
                return Err(ArrivalError::DuplicateTime {
                    line: line_number,
                    time,
                });
            }
            last_time = time;
            let location = space
                .index_of(label)
                .ok_or_else(|| ArrivalError::UnknownLocation(label.to_string()))?;
            points.push(ArrivalPoint { location, time });
        }
        if !saw_line {
            return Err(ArrivalError::ParseError {
                line: 0,
                msg: "empty sequence".into(),
            });
        }
        Ok(Self { points })
    }

    /// Renders the sequence in the same line format `parse` accepts.
    pub fn to_lines(&self, space: &MetricSpace) -> String {
        let mut out = String::new();
        for p in &self.points {
            out.push_str(&format!("{} {}\n", p.time, space.label(p.location)));
        }
        out
    }
}

/// Empirical versus theoretical waiting time between consecutive arrivals
/// inside a location subset. The waits are geometric with success mass
/// `q = sum of the subset probabilities`, so the theoretical mean is `1/q`.
#[derive(Clone, Debug)]
pub struct GapStats {
    pub empirical_mean: Option<f64>,
    pub theoretical_mean: f64,
    pub gap_count: usize,
}

pub fn gap_statistics(
    seq: &ArrivalSequence,
    subset: &[usize],
    dist: &ArrivalDistribution,
) -> Result<GapStats, ArrivalError> {
    let mut member = vec![false; dist.len()];
    for &x in subset {
        if x < member.len() {
            member[x] = true;
        }
    }
    let q: f64 = (0..dist.len())
        .filter(|&x| member[x])
        .map(|x| dist.p(x))
        .sum();
    if q <= 0.0 {
        return Err(ArrivalError::EmptySubsetMass);
    }
    let mut gaps = 0usize;
    let mut total = 0u64;
    let mut last: Option<u64> = None;
    for p in seq.points() {
        if member[p.location] {
            if let Some(prev) = last {
                gaps += 1;
                total += p.time - prev;
            }
            last = Some(p.time);
        }
    }
    Ok(GapStats {
        empirical_mean: (gaps > 0).then(|| total as f64 / gaps as f64),
        theoretical_mean: 1.0 / q,
        gap_count: gaps,
    })
}
