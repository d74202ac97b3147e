//! Per-run invariant audits.
//!
//! Every audit re-derives its claim from the event log and the final state
//! rather than trusting the engine's bookkeeping. The experiment harness
//! runs all of them on every trial and refuses to exit cleanly on failure.

use std::collections::BTreeMap;

use crate::arrivals::ArrivalSequence;
use crate::clustering::{delay_dominated_bound, validate_final, ClusterSizeSpec, CostParams};
use crate::dgreedy::{
    classify_points, EventKind, MembershipRule, PointClassification, PointLabel, RunResult,
};
use crate::metric::{MetricSpace, RadiusTable};

/// Slack on float comparisons assembled from distances; waiting times and
/// costs in the audited inequalities are otherwise exact.
const AUDIT_TOL: f64 = 1e-9;

/// Final slot sizes match the specification exactly.
pub fn audit_final_sizes(result: &RunResult, spec: &ClusterSizeSpec) -> bool {
    validate_final(&result.state, spec).unwrap_or(false)
}

/// Every assignment event satisfied its eligibility condition at the moment
/// it happened: pair formations are covered by the two waiting times, joins
/// are within reach of every member already in the slot.
pub fn audit_assignment_certificates(
    result: &RunResult,
    seq: &ArrivalSequence,
    space: &MetricSpace,
    params: &CostParams,
    rule: MembershipRule,
) -> bool {
    let lam = params.lambda;
    let mut slots: Vec<Vec<usize>> = vec![Vec::new(); result.state.k()];
    for event in &result.events {
        match event.kind {
            EventKind::Arrival => {}
            EventKind::FormPair => {
                let (i, j) = (event.points[0], event.points[1]);
                let m = event.slot.expect("pair event has a slot");
                if !slots[m].is_empty() {
                    return false;
                }
                let d = space.dist(seq.location(i), seq.location(j));
                let reach = lam * (event.time - seq.time(i)) as f64
                    + lam * (event.time - seq.time(j)) as f64;
                if d > reach + AUDIT_TOL {
                    return false;
                }
                slots[m].push(i);
                slots[m].push(j);
            }
            EventKind::JoinExisting => {
                let i = event.points[0];
                let m = event.slot.expect("join event has a slot");
                if slots[m].is_empty() {
                    return false;
                }
                let own = lam * (event.time - seq.time(i)) as f64;
                let ok = match rule {
                    MembershipRule::PerMember => slots[m].iter().all(|&j| {
                        let wj = result.wait(j) as f64;
                        space.dist(seq.location(i), seq.location(j)) <= own + lam * wj + AUDIT_TOL
                    }),
                    MembershipRule::MaxMember => {
                        let wmax =
                            slots[m].iter().map(|&j| result.wait(j)).max().unwrap_or(0) as f64;
                        slots[m].iter().all(|&j| {
                            space.dist(seq.location(i), seq.location(j))
                                <= own + lam * wmax + AUDIT_TOL
                        })
                    }
                };
                if !ok {
                    return false;
                }
                slots[m].push(i);
            }
        }
    }
    // Every point appears in exactly one terminal assignment event.
    let mut assigned = vec![0usize; seq.n()];
    for event in &result.events {
        if event.kind != EventKind::Arrival {
            for &p in &event.points {
                assigned[p] += 1;
            }
        }
    }
    assigned.iter().all(|&c| c == 1)
}

/// The total cost is delay-dominated: per unordered pair, at most
/// `2 (s_max - 1) * lambda * sum w`. Exact arithmetic on the audited side.
pub fn audit_delay_sum_bound(
    result: &RunResult,
    spec: &ClusterSizeSpec,
    params: &CostParams,
) -> bool {
    delay_dominated_bound(result.tc, spec.max_size(), params.lambda, result.w.sum())
}

/// Every early point was assigned within its radius reach time plus its
/// overshoot.
pub fn audit_early_wait_bound(
    result: &RunResult,
    seq: &ArrivalSequence,
    class: &PointClassification,
    _radii: &RadiusTable,
) -> bool {
    (0..seq.n()).all(|i| {
        if class.label[i] != PointLabel::Early {
            return true;
        }
        let reach = class.radius_steps[seq.location(i)];
        let alpha = class.alpha_early[i].unwrap_or(0.0);
        (result.wait(i) as f64) <= reach + alpha + AUDIT_TOL
    })
}

/// Every late point waited at most the whole-step diameter reach time plus
/// the gap to the next arrival beyond it.
pub fn audit_late_wait_bound(
    result: &RunResult,
    seq: &ArrivalSequence,
    _space: &MetricSpace,
    class: &PointClassification,
) -> bool {
    (0..seq.n()).all(|i| {
        if class.label[i] != PointLabel::Late {
            return true;
        }
        let alpha = class.alpha_late[i].unwrap_or(0.0);
        (result.wait(i) as f64) <= class.diameter_steps + alpha + AUDIT_TOL
    })
}

/// Among the points that outwaited their radius reach time and never saw a
/// qualifying later arrival, at most one sits at each location. These are
/// the points whose waits can stretch toward the diameter; the per-location
/// cap is what keeps their total contribution bounded.
pub fn audit_overdue_per_location(
    result: &RunResult,
    seq: &ArrivalSequence,
    space: &MetricSpace,
    radii: &RadiusTable,
) -> bool {
    let lambda = result.params.lambda;
    let n = seq.n();
    let mut count = vec![0usize; space.len()];
    for i in 0..n {
        let li = seq.location(i);
        let r = radii.r[li];
        let reach = r / lambda;
        let outwaited_radius = (result.wait(i) as f64) > reach;
        if !outwaited_radius {
            continue;
        }
        let has_qualifying_successor = (0..n).any(|j| {
            j != i
                && seq.time(j) > seq.time(i)
                && ((seq.time(j) - seq.time(i)) as f64) > reach
                && space.dist(li, seq.location(j)) <= r
        });
        if !has_qualifying_successor {
            count[li] += 1;
        }
    }
    count.iter().all(|&c| c <= 1)
}

/// The offline optimum never exceeds the online cost. Exact comparison.
pub fn audit_opt_not_above_alg(alg_cost: f64, opt_cost: f64) -> bool {
    opt_cost <= alg_cost
}

/// Bundle of every audit applicable to one run.
///
/// The delay-sum bound presumes every within-cluster pair is covered by its
/// own two delays, which only the per-member rule enforces, so it is
/// skipped under the relaxed cluster-level rule.
#[allow(clippy::too_many_arguments)]
pub fn audit_run(
    result: &RunResult,
    seq: &ArrivalSequence,
    space: &MetricSpace,
    spec: &ClusterSizeSpec,
    params: &CostParams,
    radii: &RadiusTable,
    rule: MembershipRule,
    opt_cost: Option<f64>,
) -> BTreeMap<String, bool> {
    let class = classify_points(result, seq, space, radii);
    let mut audits = BTreeMap::new();
    audits.insert("final_sizes".into(), audit_final_sizes(result, spec));
    audits.insert(
        "assignment_certificates".into(),
        audit_assignment_certificates(result, seq, space, params, rule),
    );
    if rule == MembershipRule::PerMember {
        audits.insert(
            "delay_sum_bound".into(),
            audit_delay_sum_bound(result, spec, params),
        );
    }
    audits.insert(
        "early_wait_bound".into(),
        audit_early_wait_bound(result, seq, &class, radii),
    );
    audits.insert(
        "late_wait_bound".into(),
        audit_late_wait_bound(result, seq, space, &class),
    );
    audits.insert(
        "overdue_per_location".into(),
        audit_overdue_per_location(result, seq, space, radii),
    );
    if let Some(opt) = opt_cost {
        audits.insert(
            "opt_not_above_alg".into(),
            audit_opt_not_above_alg(result.tc, opt),
        );
    }
    audits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrivals::ArrivalDistribution;
    use crate::clustering::ClusterSizeSpec;
    use crate::dgreedy::run;
    use crate::metric::radius_table;

    fn walkthrough_audits() -> BTreeMap<String, bool> {
        let space = MetricSpace::new(
            vec!["A".into(), "B".into(), "C".into()],
            vec![
                vec![0.0, 2.0, 2.0],
                vec![2.0, 0.0, 2.0],
                vec![2.0, 2.0, 0.0],
            ],
        )
        .unwrap();
        let seq = ArrivalSequence::parse("1 A\n3 B\n4 C", &space).unwrap();
        let dist = ArrivalDistribution::validate(vec![0.2; 3]).unwrap();
        let radii = radius_table(&space, &dist).unwrap();
        let params = CostParams::default();
        let result = run(&seq, &space, &[3], &params, MembershipRule::PerMember).unwrap();
        let spec = ClusterSizeSpec::fixed_degenerate(vec![3]).unwrap();
        audit_run(
            &result,
            &seq,
            &space,
            &spec,
            &params,
            &radii,
            MembershipRule::PerMember,
            Some(20.0),
        )
    }

    #[test]
    fn walkthrough_passes_every_audit() {
        let audits = walkthrough_audits();
        assert_eq!(audits.len(), 7);
        for (name, pass) in audits {
            assert!(pass, "audit {name} failed");
        }
    }

    #[test]
    fn opt_above_alg_fails_audit() {
        assert!(!audit_opt_not_above_alg(20.0, 28.0));
        assert!(audit_opt_not_above_alg(28.0, 20.0));
        assert!(audit_opt_not_above_alg(20.0, 20.0));
    }
}
