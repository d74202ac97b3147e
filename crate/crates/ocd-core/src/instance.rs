//! Instance files: a location set, a distance matrix, and per-location
//! arrival probabilities, stored as JSON.
//!
//! Loading validates the metric axioms and refuses non-metric input unless
//! repair is requested, in which case the matrix is shifted, closed, and
//! symmetrized first.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arrivals::{ArrivalDistribution, ArrivalError};
use crate::metric::{repair_to_metric, validate_space, MetricError, MetricSpace, RawSpace};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("cannot read instance: {0}")]
    Io(#[from] std::io::Error),
    #[error("instance is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("`p` has {p} entries for {locations} locations")]
    LengthMismatch { locations: usize, p: usize },
    #[error(
        "instance is not metric ({violations} axiom violations); pass the repair flag to fix it"
    )]
    NotMetric { violations: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Arrival(#[from] ArrivalError),
}

/// On-disk shape of an instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceFile {
    pub locations: Vec<String>,
    pub dist: Vec<Vec<f64>>,
    pub p: Vec<f64>,
}

/// A loaded instance: a validated metric space plus its arrival
/// distribution, index-aligned.
#[derive(Clone, Debug)]
pub struct Instance {
    pub space: MetricSpace,
    pub dist: ArrivalDistribution,
}

/// Repair policy for non-metric input.
#[derive(Clone, Copy, Debug, Default)]
pub enum RepairPolicy {
    /// Refuse non-metric matrices.
    #[default]
    Refuse,
    /// Shift/close/symmetrize with the given positive epsilon.
    Repair { epsilon: f64 },
}

pub fn parse_instance(json: &str, policy: RepairPolicy) -> Result<Instance, InstanceError> {
    let file: InstanceFile = serde_json::from_str(json)?;
    instance_from_file(file, policy)
}

pub fn load_instance(path: &Path, policy: RepairPolicy) -> Result<Instance, InstanceError> {
    parse_instance(&fs::read_to_string(path)?, policy)
}

pub fn instance_from_file(
    file: InstanceFile,
    policy: RepairPolicy,
) -> Result<Instance, InstanceError> {
    if file.p.len() != file.locations.len() {
        return Err(InstanceError::LengthMismatch {
            locations: file.locations.len(),
            p: file.p.len(),
        });
    }
    let raw = RawSpace::new(file.locations, file.dist)?;
    let report = validate_space(&raw);
    let space = if report.is_metric() {
        MetricSpace::new(
            raw.labels().to_vec(),
            (0..raw.len())
                .map(|x| (0..raw.len()).map(|y| raw.dist(x, y)).collect())
                .collect(),
        )?
    } else {
        match policy {
            RepairPolicy::Refuse => {
                return Err(InstanceError::NotMetric {
                    violations: report.violations.len(),
                })
            }
            RepairPolicy::Repair { epsilon } => repair_to_metric(&raw, epsilon)?,
        }
    };
    let dist = ArrivalDistribution::validate(file.p)?;
    Ok(Instance { space, dist })
}

/// Renders an instance back to its on-disk JSON shape.
pub fn instance_to_file(instance: &Instance) -> InstanceFile {
    let n = instance.space.len();
    InstanceFile {
        locations: instance.space.labels().to_vec(),
        dist: (0..n)
            .map(|x| (0..n).map(|y| instance.space.dist(x, y)).collect())
            .collect(),
        p: instance.dist.probabilities().to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIANGLE: &str = r#"{
        "locations": ["A", "B", "C"],
        "dist": [[0, 2, 2], [2, 0, 2], [2, 2, 0]],
        "p": [0.2, 0.2, 0.2]
    }"#;

    #[test]
    fn loads_a_metric_instance() {
        let inst = parse_instance(TRIANGLE, RepairPolicy::Refuse).unwrap();
        assert_eq!(inst.space.len(), 3);
        assert_eq!(inst.space.diameter(), 2.0);
        assert!((inst.dist.total_mass() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn refuses_non_metric_without_repair() {
        let bad = r#"{
            "locations": ["A", "B"],
            "dist": [[0, 4], [2, 0]],
            "p": [0.5, 0.5]
        }"#;
        assert!(matches!(
            parse_instance(bad, RepairPolicy::Refuse),
            Err(InstanceError::NotMetric { violations: 1 })
        ));
        let inst = parse_instance(bad, RepairPolicy::Repair { epsilon: 1e-6 }).unwrap();
        assert_eq!(inst.space.dist(0, 1), 3.0);
    }

    #[test]
    fn rejects_length_mismatch() {
        let bad = r#"{
            "locations": ["A", "B"],
            "dist": [[0, 1], [1, 0]],
            "p": [0.5]
        }"#;
        assert!(matches!(
            parse_instance(bad, RepairPolicy::Refuse),
            Err(InstanceError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn rejects_bad_distribution() {
        let bad = r#"{
            "locations": ["A", "B"],
            "dist": [[0, 1], [1, 0]],
            "p": [0.7, 0.4]
        }"#;
        assert!(matches!(
            parse_instance(bad, RepairPolicy::Refuse),
            Err(InstanceError::Arrival(ArrivalError::MassExceedsOne(_)))
        ));
    }

    #[test]
    fn round_trips_through_file_shape() {
        let inst = parse_instance(TRIANGLE, RepairPolicy::Refuse).unwrap();
        let file = instance_to_file(&inst);
        let json = serde_json::to_string(&file).unwrap();
        let again = parse_instance(&json, RepairPolicy::Refuse).unwrap();
        assert_eq!(again.space.labels(), inst.space.labels());
        assert_eq!(again.space.dist(0, 2), 2.0);
    }
}
