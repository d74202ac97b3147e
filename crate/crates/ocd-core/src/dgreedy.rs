//! Delayed-greedy online clustering engine.
//!
//! Points arrive over discrete time and wait until the engine irrevocably
//! places them. At every time step each pending point is offered two moves:
//! join a non-empty, non-full slot whose members are all within reach of the
//! accumulated waiting times, or found a new two-point cluster in an empty
//! slot with another pending point whose combined waiting time covers the
//! distance. Both moves are priced by the increase in total cost; the pair
//! move wins ties. If a pair move exists but costs more than an available
//! join, the point keeps waiting.
//!
//! Tie-breaking is fixed for reproducibility: lowest slot index for joins;
//! for pairs, cheapest first, then the partner that has waited longest, then
//! the lowest partner index, then the lowest empty slot index.
//!
//! The engine processes pending points once per time step, in arrival order,
//! with in-step state updates visible to later points; points assigned
//! mid-step are skipped. Empty slots are reachable only through the pair
//! move, so every cluster starts with exactly two points.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arrivals::ArrivalSequence;
use crate::clustering::{
    insertion_delta, total_cost, ClusterError, ClusterSizeSpec, ClusteringState, CostParams,
    DelayProfile,
};
use crate::metric::{MetricSpace, RadiusTable};

#[derive(Debug, Error)]
pub enum DGreedyError {
    #[error("size specification is infeasible for {n} points")]
    InfeasibleSpec { n: usize },
    #[error("cluster size {0} cannot be reached online (minimum is 2)")]
    UnreachableSize(usize),
    #[error("point {point} refers to location {location} outside the space")]
    LocationOutOfRange { point: usize, location: usize },
    #[error("engine stalled at time {time}; this is a bug")]
    Stalled { time: u64 },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// How a pending point's distance is tested against a candidate cluster.
///
/// `PerMember` demands `d(l_i, l_j) <= lambda*(t - t_i) + lambda*w_j` for
/// every member `j`. `MaxMember` relaxes the right-hand side to use the
/// largest member delay instead of each member's own.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MembershipRule {
    #[default]
    PerMember,
    MaxMember,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrival,
    JoinExisting,
    FormPair,
}

/// One step of the event log. Point and slot indices are zero-based here;
/// external renderings add one.
#[derive(Clone, Debug, Serialize)]
pub struct Event {
    pub time: u64,
    pub kind: EventKind,
    pub points: Vec<usize>,
    pub slot: Option<usize>,
    pub delta_cost: f64,
}

/// Outcome of a completed run: final slots, waiting times, total cost, the
/// ordered event log, and the cost parameters the run used.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub state: ClusteringState,
    pub w: DelayProfile,
    pub tc: f64,
    pub events: Vec<Event>,
    pub params: CostParams,
}

impl RunResult {
    pub fn assign_time(&self, point: usize) -> u64 {
        self.state.assign_time(point).expect("run completed")
    }

    pub fn wait(&self, point: usize) -> u64 {
        self.w.get(point).expect("run completed")
    }
}

/// Simulation engine over one arrival sequence.
pub struct Engine<'a> {
    seq: &'a ArrivalSequence,
    space: &'a MetricSpace,
    locs: Vec<usize>,
    params: CostParams,
    rule: MembershipRule,
    lower_caps: Option<Vec<usize>>,
    upper_caps: Vec<usize>,
    phase_two: bool,
    state: ClusteringState,
    w: DelayProfile,
    pending: Vec<usize>,
    pending_count: usize,
    next_arrival: usize,
    now: u64,
    events: Vec<Event>,
}

impl<'a> Engine<'a> {
    /// Engine with fixed slot capacities.
    pub fn new(
        seq: &'a ArrivalSequence,
        space: &'a MetricSpace,
        caps: Vec<usize>,
        params: CostParams,
        rule: MembershipRule,
    ) -> Result<Self, DGreedyError> {
        Self::with_cap_schedule(seq, space, None, caps, params, rule)
    }

    fn with_cap_schedule(
        seq: &'a ArrivalSequence,
        space: &'a MetricSpace,
        lower_caps: Option<Vec<usize>>,
        upper_caps: Vec<usize>,
        params: CostParams,
        rule: MembershipRule,
    ) -> Result<Self, DGreedyError> {
        let locs: Vec<usize> = seq.points().iter().map(|p| p.location).collect();
        for (point, &location) in locs.iter().enumerate() {
            if location >= space.len() {
                return Err(DGreedyError::LocationOutOfRange { point, location });
            }
        }
        let k = upper_caps.len();
        Ok(Self {
            seq,
            space,
            locs,
            params,
            rule,
            lower_caps,
            upper_caps,
            phase_two: false,
            state: ClusteringState::new(k, seq.n()),
            w: DelayProfile::new(seq.n()),
            pending: Vec::new(),
            pending_count: 0,
            next_arrival: 0,
            now: 0,
            events: Vec::new(),
        })
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn state(&self) -> &ClusteringState {
        &self.state
    }

    pub fn delays(&self) -> &DelayProfile {
        &self.w
    }

    fn cap(&self, m: usize) -> usize {
        match (&self.lower_caps, self.phase_two) {
            (Some(lower), false) => lower[m],
            _ => self.upper_caps[m],
        }
    }

    fn wait_of(&self, i: usize, t: u64) -> u64 {
        t - self.seq.time(i)
    }

    /// Slots a pending point may join at time `t`: non-empty, below capacity,
    /// and every member within reach under the membership rule.
    pub fn eligible_existing(&self, i: usize, t: u64) -> Vec<usize> {
        let li = self.locs[i];
        let own = self.params.lambda * self.wait_of(i, t) as f64;
        (0..self.state.k())
            .filter(|&m| {
                let members = self.state.slot(m);
                if members.is_empty() || members.len() >= self.cap(m) {
                    return false;
                }
                match self.rule {
                    MembershipRule::PerMember => members.iter().all(|&j| {
                        let wj = self.w.get(j).expect("member assigned");
                        self.space.dist(li, self.locs[j]) <= own + self.params.lambda * wj as f64
                    }),
                    MembershipRule::MaxMember => {
                        let wmax = members
                            .iter()
                            .map(|&j| self.w.get(j).expect("member assigned"))
                            .max()
                            .unwrap_or(0);
                        members.iter().all(|&j| {
                            self.space.dist(li, self.locs[j])
                                <= own + self.params.lambda * wmax as f64
                        })
                    }
                }
            })
            .collect()
    }

    /// Pairings `(partner, empty slot)` available to a pending point at time
    /// `t`: the partner is pending and the combined scaled waiting times
    /// cover the distance.
    pub fn eligible_pairs(&self, i: usize, t: u64) -> Vec<(usize, usize)> {
        let li = self.locs[i];
        let own = self.params.lambda * self.wait_of(i, t) as f64;
        let empty_slots: Vec<usize> = (0..self.state.k())
            .filter(|&m| self.state.slot(m).is_empty())
            .collect();
        if empty_slots.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::new();
        for &j in &self.pending {
            if j == i || self.state.is_assigned(j) {
                continue;
            }
            let reach = own + self.params.lambda * self.wait_of(j, t) as f64;
            if self.space.dist(li, self.locs[j]) <= reach {
                for &m in &empty_slots {
                    out.push((j, m));
                }
            }
        }
        out
    }

    fn best_existing(&self, i: usize, t: u64) -> Option<(usize, f64)> {
        let wait = self.wait_of(i, t);
        let mut best: Option<(usize, f64)> = None;
        for m in self.eligible_existing(i, t) {
            let delta = insertion_delta(
                self.state.slot(m),
                &[(i, wait)],
                &self.locs,
                self.space,
                &self.w,
                &self.params,
                self.cap(m),
            )
            .expect("eligibility implies capacity");
            match best {
                Some((_, d)) if delta >= d => {}
                _ => best = Some((m, delta)),
            }
        }
        best
    }

    fn best_pair(&self, i: usize, t: u64) -> Option<(usize, usize, f64)> {
        let mut candidates: Vec<(f64, u64, usize, usize)> = self
            .eligible_pairs(i, t)
            .into_iter()
            .map(|(j, m)| {
                let delta = insertion_delta(
                    &[],
                    &[(i, self.wait_of(i, t)), (j, self.wait_of(j, t))],
                    &self.locs,
                    self.space,
                    &self.w,
                    &self.params,
                    self.cap(m),
                )
                .expect("pair fits an empty slot");
                (delta, self.wait_of(j, t), j, m)
            })
            .collect();
        // Cheapest first, then longest-waiting partner, then indices.
        candidates.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then(b.1.cmp(&a.1))
                .then(a.2.cmp(&b.2))
                .then(a.3.cmp(&b.3))
        });
        candidates.first().map(|&(delta, _, j, m)| (j, m, delta))
    }

    fn assign(&mut self, point: usize, slot: usize, t: u64) {
        let cap = self.cap(slot);
        self.state
            .assign(point, slot, t, cap)
            .expect("assignment checked");
        self.w.set(point, self.wait_of(point, t));
        self.pending_count -= 1;
        if !self.phase_two {
            if let Some(lower) = &self.lower_caps {
                if (0..self.state.k()).all(|m| self.state.slot(m).len() >= lower[m]) {
                    self.phase_two = true;
                }
            }
        }
    }

    /// Advances the clock by one step: registers any arrival, then runs one
    /// pass over the pending points in arrival order.
    pub fn tick(&mut self) {
        self.now += 1;
        let t = self.now;
        while self.next_arrival < self.seq.n() && self.seq.time(self.next_arrival) == t {
            let i = self.next_arrival;
            self.pending.push(i);
            self.pending_count += 1;
            self.events.push(Event {
                time: t,
                kind: EventKind::Arrival,
                points: vec![i],
                slot: None,
                delta_cost: 0.0,
            });
            self.next_arrival += 1;
        }
        self.process_pass(t);
    }

    fn process_pass(&mut self, t: u64) {
        let snapshot = self.pending.clone();
        for &i in &snapshot {
            if self.state.is_assigned(i) {
                continue;
            }
            let existing = self.best_existing(i, t);
            let pair = if self.pending_count >= 2 {
                self.best_pair(i, t)
            } else {
                None
            };
            match (existing, pair) {
                (existing, Some((j, m, delta_pair)))
                    if existing.is_none_or(|(_, delta_exist)| delta_pair <= delta_exist) =>
                {
                    self.assign(i, m, t);
                    self.assign(j, m, t);
                    let mut points = vec![i, j];
                    points.sort_unstable();
                    self.events.push(Event {
                        time: t,
                        kind: EventKind::FormPair,
                        points,
                        slot: Some(m),
                        delta_cost: delta_pair,
                    });
                }
                (Some((m, delta_exist)), None) => {
                    self.assign(i, m, t);
                    self.events.push(Event {
                        time: t,
                        kind: EventKind::JoinExisting,
                        points: vec![i],
                        slot: Some(m),
                        delta_cost: delta_exist,
                    });
                }
                // A pair exists but costs more than the join: keep waiting.
                _ => {}
            }
        }
        self.pending.retain(|&p| !self.state.is_assigned(p));
    }

    /// Runs until every point is assigned. Time keeps ticking past the last
    /// arrival; quiet stretches with nothing pending are skipped.
    pub fn run_to_completion(mut self) -> Result<RunResult, DGreedyError> {
        if self.seq.is_empty() {
            return Err(DGreedyError::InfeasibleSpec { n: 0 });
        }
        let lambda = self.params.lambda;
        let slack = (self.space.diameter() / lambda).ceil();
        let fuse = self
            .seq
            .horizon()
            .saturating_add(slack.min(u64::MAX as f64 / 2.0) as u64)
            .saturating_add(self.seq.n() as u64 + 16);
        while !self.state.all_assigned() {
            if self.pending_count == 0 && self.next_arrival < self.seq.n() {
                self.now = self.seq.time(self.next_arrival) - 1;
            }
            self.tick();
            if self.now > fuse {
                return Err(DGreedyError::Stalled { time: self.now });
            }
        }
        let tc = total_cost(
            self.state.slots(),
            &self.locs,
            self.space,
            &self.w,
            &self.params,
        )?;
        Ok(RunResult {
            state: self.state,
            w: self.w,
            tc,
            events: self.events,
            params: self.params,
        })
    }
}

fn check_runnable_sizes(sizes: &[usize], n: usize) -> Result<(), DGreedyError> {
    if let Some(&s) = sizes.iter().find(|&&s| s < 2) {
        return Err(DGreedyError::UnreachableSize(s));
    }
    if sizes.iter().sum::<usize>() != n {
        return Err(DGreedyError::InfeasibleSpec { n });
    }
    Ok(())
}

/// Full online run with fixed cluster sizes.
pub fn run(
    seq: &ArrivalSequence,
    space: &MetricSpace,
    sizes: &[usize],
    params: &CostParams,
    rule: MembershipRule,
) -> Result<RunResult, DGreedyError> {
    check_runnable_sizes(sizes, seq.n())?;
    Engine::new(seq, space, sizes.to_vec(), *params, rule)?.run_to_completion()
}

/// Two-phase run for interval size bounds: slots are first capped at their
/// lower bounds; the moment every slot reaches its lower bound the caps
/// switch to the upper bounds and the same run continues.
pub fn run_interval(
    seq: &ArrivalSequence,
    space: &MetricSpace,
    bounds: &[(usize, usize)],
    params: &CostParams,
    rule: MembershipRule,
) -> Result<RunResult, DGreedyError> {
    let n = seq.n();
    let lo: usize = bounds.iter().map(|&(l, _)| l).sum();
    let hi: usize = bounds.iter().map(|&(_, u)| u).sum();
    if !(lo <= n && n <= hi) {
        return Err(DGreedyError::InfeasibleSpec { n });
    }
    if let Some(&(l, _)) = bounds.iter().find(|&&(l, _)| l < 2) {
        return Err(DGreedyError::UnreachableSize(l));
    }
    let lower: Vec<usize> = bounds.iter().map(|&(l, _)| l).collect();
    let upper: Vec<usize> = bounds.iter().map(|&(_, u)| u).collect();
    Engine::with_cap_schedule(seq, space, Some(lower), upper, *params, rule)?.run_to_completion()
}

/// Dispatches on the specification kind.
pub fn run_spec(
    seq: &ArrivalSequence,
    space: &MetricSpace,
    spec: &ClusterSizeSpec,
    params: &CostParams,
    rule: MembershipRule,
) -> Result<RunResult, DGreedyError> {
    match spec {
        ClusterSizeSpec::Fixed(sizes) => run(seq, space, sizes, params, rule),
        ClusterSizeSpec::Interval(bounds) => run_interval(seq, space, bounds, params, rule),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PointLabel {
    Early,
    Late,
}

/// Early/late split of the points of a finished run.
///
/// A point is early when it was assigned within its radius reach time of
/// its arrival and some later point landed inside that radius more than the
/// reach time after it; every other point is late. For early points `alpha`
/// is the overshoot of the first such later point; for late points it is
/// the gap from the diameter reach time to the next arrival beyond it, or
/// zero when the sequence ends first.
///
/// All thresholds are in time units: a distance is within reach after
/// `distance / lambda` steps, and because assignments happen on the integer
/// clock the diameter reach time rounds up to whole steps.
#[derive(Clone, Debug)]
pub struct PointClassification {
    pub label: Vec<PointLabel>,
    pub alpha_early: Vec<Option<f64>>,
    pub alpha_late: Vec<Option<f64>>,
    /// Per-location radius reach time `r_x / lambda`.
    pub radius_steps: Vec<f64>,
    /// Whole-step diameter reach time `ceil(d_max / lambda)`.
    pub diameter_steps: f64,
}

impl PointClassification {
    pub fn is_early(&self, i: usize) -> bool {
        self.label[i] == PointLabel::Early
    }
}

pub fn classify_points(
    result: &RunResult,
    seq: &ArrivalSequence,
    space: &MetricSpace,
    radii: &RadiusTable,
) -> PointClassification {
    let n = seq.n();
    let t_last = seq.horizon();
    let lambda = result.params.lambda;
    let radius_steps: Vec<f64> = radii.r.iter().map(|r| r / lambda).collect();
    let diameter_steps = (space.diameter() / lambda).ceil();
    let mut label = Vec::with_capacity(n);
    let mut alpha_early = vec![None; n];
    let mut alpha_late = vec![None; n];
    for i in 0..n {
        let li = seq.location(i);
        let r = radii.r[li];
        let reach = radius_steps[li];
        let assigned_within_radius = (result.wait(i) as f64) <= reach;
        // Overshoot of the first later point inside the radius ball that
        // arrives more than the reach time after i.
        let min_overshoot = (0..n)
            .filter(|&j| j != i && seq.time(j) > seq.time(i))
            .filter(|&j| {
                let gap = (seq.time(j) - seq.time(i)) as f64;
                gap > reach && space.dist(li, seq.location(j)) <= r
            })
            .map(|j| (seq.time(j) - seq.time(i)) as f64 - reach)
            .fold(f64::INFINITY, f64::min);
        if assigned_within_radius && min_overshoot.is_finite() {
            label.push(PointLabel::Early);
            alpha_early[i] = Some(min_overshoot);
        } else {
            label.push(PointLabel::Late);
            let ti = seq.time(i);
            let alpha = if ((t_last - ti) as f64) <= diameter_steps {
                0.0
            } else {
                (0..n)
                    .filter(|&j| (seq.time(j).saturating_sub(ti)) as f64 > diameter_steps)
                    .map(|j| (seq.time(j) - ti) as f64 - diameter_steps)
                    .fold(f64::INFINITY, f64::min)
            };
            alpha_late[i] = Some(alpha);
        }
    }
    PointClassification {
        label,
        alpha_early,
        alpha_late,
        radius_steps,
        diameter_steps,
    }
}

/// Renders the event log as TSV: time, kind, one-based points, one-based
/// slot, cost delta, and the running total cost.
pub fn trace_tsv(result: &RunResult) -> String {
    let mut out = String::from("time\tkind\tpoints\tslot\tdelta_cost\trunning_tc\n");
    let mut running = 0.0;
    for e in &result.events {
        running += e.delta_cost;
        let kind = match e.kind {
            EventKind::Arrival => "arrival",
            EventKind::JoinExisting => "join_existing",
            EventKind::FormPair => "form_pair",
        };
        let points = e
            .points
            .iter()
            .map(|p| (p + 1).to_string())
            .collect::<Vec<_>>()
            .join(",");
        let slot = e.slot.map(|m| (m + 1).to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            e.time, kind, points, slot, e.delta_cost, running
        ));
    }
    out
}
