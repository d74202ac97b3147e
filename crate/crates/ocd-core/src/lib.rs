//! Online non-centroid clustering with delays on finite metric spaces.
//!
//! Points arrive one at a time from an unknown, fixed arrival distribution
//! and must be irrevocably grouped into clusters of prescribed sizes;
//! assignments may be postponed at a delay cost equal to the waiting time.
//! The cost of a clustering sums, over ordered pairs sharing a cluster, the
//! pair's distance plus both (scaled) delays.
//!
//! The crate provides:
//!
//! - [`metric`]: finite metric spaces, axiom validation and repair, balls,
//!   and the per-location assignment radius;
//! - [`arrivals`]: the discrete-time arrival model, sequence sampling,
//!   parsing, and gap statistics;
//! - [`clustering`]: size specifications, cluster state, delay profiles, and
//!   the total-cost objective;
//! - [`dgreedy`]: the delayed-greedy online engine, its event log, the
//!   interval-size two-phase variant, and the early/late point split;
//! - [`oracle`]: the exact offline optimum by partition enumeration, plus a
//!   brute-force schedule search used as a test oracle;
//! - [`bounds`]: closed-form expected-cost and expected-optimum bounds and
//!   the asymptotic ratio bound;
//! - [`experiment`]: the seeded Monte-Carlo harness with per-trial audits
//!   and bootstrap ratio estimates.
//!
//! Determinism: every random choice flows through a ChaCha8 stream keyed by
//! a 64-bit seed ([`rng::SeedStream`]); identical inputs give byte-identical
//! outputs on every platform.
//!
//! ```
//! use ocd_core::arrivals::ArrivalSequence;
//! use ocd_core::clustering::CostParams;
//! use ocd_core::dgreedy::{run, MembershipRule};
//! use ocd_core::metric::MetricSpace;
//! use ocd_core::oracle::opt_exact;
//!
//! // Three locations, every pair at distance 2; points at times 1, 3, 4.
//! let space = MetricSpace::new(
//!     vec!["A".into(), "B".into(), "C".into()],
//!     vec![
//!         vec![0.0, 2.0, 2.0],
//!         vec![2.0, 0.0, 2.0],
//!         vec![2.0, 2.0, 0.0],
//!     ],
//! )
//! .unwrap();
//! let seq = ArrivalSequence::parse("1 A\n3 B\n4 C", &space).unwrap();
//! let params = CostParams::default();
//!
//! // One cluster of three: the first two points pair at t = 3, the third
//! // joins at t = 6 once every member is within reach of its delay.
//! let online = run(&seq, &space, &[3], &params, MembershipRule::PerMember).unwrap();
//! assert_eq!(online.tc, 28.0);
//!
//! // The offline optimum forms the cluster at the second arrival.
//! let offline = opt_exact(&seq, &space, &[3], &params).unwrap();
//! assert_eq!(offline.opt_cost, 20.0);
//! ```

pub mod arrivals;
pub mod audit;
pub mod bounds;
pub mod clustering;
pub mod dgreedy;
pub mod experiment;
pub mod instance;
pub mod metric;
pub mod oracle;
pub mod rng;

pub use arrivals::{ArrivalDistribution, ArrivalPoint, ArrivalSequence, GapStats};
pub use bounds::BoundsReport;
pub use clustering::{ClusterSizeSpec, ClusteringState, CostParams, DelayProfile};
pub use dgreedy::{
    classify_points, run, run_interval, run_spec, Engine, Event, EventKind, MembershipRule,
    PointClassification, PointLabel, RunResult,
};
pub use experiment::{
    estimate_roe, run_experiment, ExperimentConfig, ExperimentReport, TrialReport,
};
pub use instance::{Instance, InstanceFile, RepairPolicy};
pub use metric::{
    ball_mass, radius_table, repair_to_metric, validate_space, BallMode, MetricSpace, RadiusTable,
    RawSpace, ValidationReport,
};
pub use oracle::{brute_force_schedule_opt, opt_exact, optimal_delay_profile, OracleResult};
