//! Schedulability, stability and path following on top of the reachability
//! decision.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::decide::{robust_reach, DecideError, ReachCertificate};
use crate::model::{Bms, CmsInstance, HPolytope, HalfSpace, Mode, ReachProblem};
use crate::rat::{format_rat, int, rat, sqrt_lower_bound, sqrt_upper_bound, Rat, RVec};
use crate::sim::{run_game, EnvStrategy, Outcome, Trace, DEFAULT_MAX_STEPS};

/// Tolerance used when deciding schedulability. Any positive value gives
/// the same verdict: the reachability criterion ignores the safety set for
/// interior endpoints.
pub fn schedulability_epsilon() -> Rat {
    rat(1, 2)
}

/// Upper end of the clock range added to make the safety set bounded; the
/// lower end is `-1` so the start (clock 0) stays interior.
const CLOCK_UPPER: i64 = 2;
const CLOCK_LOWER: i64 = -1;

/// Appends a clock coordinate with rate 1 to every vertex of every mode.
pub fn with_clock(bms: &Bms) -> Bms {
    let modes = bms
        .modes()
        .iter()
        .map(|m| {
            let vertices = m
                .vertices()
                .iter()
                .map(|v| {
                    let mut coords = v.0.clone();
                    coords.push(Rat::one());
                    RVec(coords)
                })
                .collect();
            Mode::new(m.name(), vertices).expect("same shape as the source mode")
        })
        .collect();
    Bms::new(bms.dim() + 1, modes).expect("uniform dimension")
}

/// Hold problem around `center` (original coordinates): stay within
/// `2d·|x_i - center_i| <= eps` while the clock goes from 0 to 1.
fn hold_problem(d: usize, center: &RVec, eps: &Rat) -> ReachProblem {
    let n = d + 1;
    let scale = int(2 * d as i64);
    let mut rows = Vec::with_capacity(2 * n);
    for i in 0..d {
        let a = RVec::unit(n, i).scale(&scale);
        rows.push(HalfSpace::new(a.clone(), eps + &scale * &center[i]));
        rows.push(HalfSpace::new(a.scale(&-Rat::one()), eps - &scale * &center[i]));
    }
    rows.push(HalfSpace::new(RVec::unit(n, d), int(CLOCK_UPPER)));
    rows.push(HalfSpace::new(RVec::unit(n, d).scale(&-Rat::one()), -int(CLOCK_LOWER)));
    let mut x0 = center.0.clone();
    x0.push(Rat::zero());
    let mut xt = center.0.clone();
    xt.push(Rat::one());
    ReachProblem {
        x0: RVec(x0),
        xt: RVec(xt),
        epsilon: eps.clone(),
        safety: HPolytope::new(rows),
    }
}

/// The clock-augmented system and the problem of reaching clock value 1
/// from the origin while every original coordinate stays in the
/// `2d·|x_i| <= eps` box.
pub fn sched_transform(bms: &Bms, eps: &Rat) -> (Bms, ReachProblem) {
    let d = bms.dim();
    (with_clock(bms), hold_problem(d, &RVec::zeros(d), eps))
}

pub fn decide_schedulable(bms: &Bms) -> ReachCertificate {
    let (aug, prob) = sched_transform(bms, &schedulability_epsilon());
    robust_reach(&aug, &prob).expect("the hold problem is always well-formed")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldRound {
    pub epsilon: Rat,
    /// Game trace in clock-augmented coordinates.
    pub trace: Trace,
    pub start: RVec,
    pub end: RVec,
    /// Clock value at the end of the round.
    pub elapsed: Rat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldRun {
    pub epsilon: Rat,
    pub rounds: Vec<HoldRound>,
}

impl HoldRun {
    /// Every visited point (original coordinates) across all rounds.
    pub fn points(&self) -> impl Iterator<Item = RVec> + '_ {
        self.rounds.iter().flat_map(|r| {
            r.trace
                .steps
                .iter()
                .map(|s| RVec(s.x_after.0[..s.x_after.len() - 1].to_vec()))
        })
    }

    pub fn total_elapsed(&self) -> Rat {
        self.rounds.iter().fold(Rat::zero(), |acc, r| acc + &r.elapsed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HoldError {
    #[error("system is not schedulable (witness instance {0})")]
    NotSchedulable(CmsInstance),
    #[error("rounds must be at least 1")]
    NoRounds,
    #[error("start has dimension {found}, system has {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("round {round} ended with outcome: {outcome}")]
    RoundFailed { round: usize, outcome: Outcome },
}

/// Halving tolerance `eps·2^{-i}`, `i >= 1`.
pub fn halved(eps: &Rat, i: usize) -> Rat {
    eps / Rat::from_integer(BigInt::one() << i)
}

/// Stays near `x0` for `rounds` clock units: round `i` plays the hold game
/// with tolerance `eps·2^{-i}` around the point where round `i-1` ended.
pub fn run_hold(bms: &Bms, x0: &RVec, eps: &Rat, rounds: usize, env: &EnvStrategy) -> Result<HoldRun, HoldError> {
    if rounds == 0 {
        return Err(HoldError::NoRounds);
    }
    if x0.len() != bms.dim() {
        return Err(HoldError::Dimension { expected: bms.dim(), found: x0.len() });
    }
    if let ReachCertificate::Unreachable { witness, .. } = decide_schedulable(bms) {
        return Err(HoldError::NotSchedulable(witness));
    }
    let aug = with_clock(bms);
    let d = bms.dim();
    let mut center = x0.clone();
    let mut out = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let eps_i = halved(eps, round);
        let prob = hold_problem(d, &center, &eps_i);
        let trace = run_game(&aug, &prob, env, DEFAULT_MAX_STEPS);
        if trace.outcome != Outcome::Reached {
            return Err(HoldError::RoundFailed { round, outcome: trace.outcome });
        }
        let last = trace.final_point().cloned().unwrap_or_else(|| prob.x0.clone());
        let end = RVec(last.0[..d].to_vec());
        let elapsed = last[d].clone();
        out.push(HoldRound { epsilon: eps_i, trace, start: center, end: end.clone(), elapsed });
        center = end;
    }
    Ok(HoldRun { epsilon: eps.clone(), rounds: out })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StabilityVerdict {
    /// Reachability of the target at tolerance `ε/2`.
    pub reach: ReachCertificate,
    /// Schedulability (hold) certificate.
    pub hold: ReachCertificate,
}

impl StabilityVerdict {
    pub fn is_stable(&self) -> bool {
        self.reach.is_reachable() && self.hold.is_reachable()
    }
}

/// Stable iff the target is robustly reachable and the system can hold
/// still around it.
pub fn decide_stable(bms: &Bms, prob: &ReachProblem) -> Result<StabilityVerdict, DecideError> {
    let mut half = prob.clone();
    half.epsilon = &prob.epsilon / int(2);
    let reach = robust_reach(bms, &half)?;
    Ok(StabilityVerdict { reach, hold: decide_schedulable(bms) })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorridorError {
    #[error("segment endpoints coincide")]
    Degenerate,
    #[error("tolerance must be positive")]
    NonPositiveEpsilon,
    #[error("dimension mismatch")]
    Dimension,
    #[error("slab overshoot alone exceeds the tube radius")]
    NoPerpendicularBudget,
    #[error("row {row} cuts into the eps/2 ball around the goal")]
    BallNotContained { row: usize },
    #[error("segment endpoint is not strictly inside row {row}")]
    EndpointNotInterior { row: usize },
}

/// Fractional bits of the rational square-root bounds used for corridor
/// widths.
const CORRIDOR_SQRT_BITS: u32 = 20;

/// A convex corridor around the segment `p → q`: every point of it lies
/// within `eps` of the segment, and it contains the `eps/2` ball around
/// `q`. The corridor is the intersection of
///
/// * a slab `-β <= d·(x-p) <= d·d + β` with `d = q - p` and `β` a rational
///   upper bound on `(eps/2)‖d‖`;
/// * for an orthogonal basis `w_k` of `d`'s complement (unnormalised
///   Gram–Schmidt), rows `|w_k·(x-p)| <= b_k` where the `b_k` share the
///   squared budget `eps² - β²/(d·d)` left after the slab overshoot;
/// * the given safety rows.
///
/// Both guarantees are checked in exact arithmetic; when they cannot be
/// certified the construction fails instead of returning a weaker set.
pub fn build_corridor(p: &RVec, q: &RVec, eps: &Rat, safety: &HPolytope) -> Result<HPolytope, CorridorError> {
    let n = p.len();
    if q.len() != n || safety.rows.iter().any(|r| r.a.len() != n) {
        return Err(CorridorError::Dimension);
    }
    if !eps.is_positive() {
        return Err(CorridorError::NonPositiveEpsilon);
    }
    let d = q - p;
    if d.is_zero() {
        return Err(CorridorError::Degenerate);
    }
    let dd = d.norm2_sq();
    let half_eps = eps / int(2);
    let beta = sqrt_upper_bound(&(&half_eps * &half_eps * &dd), CORRIDOR_SQRT_BITS);
    let budget = eps * eps - &beta * &beta / &dd;
    if !budget.is_positive() {
        return Err(CorridorError::NoPerpendicularBudget);
    }

    let mut basis: Vec<RVec> = vec![d.clone()];
    for j in 0..n {
        if basis.len() == n {
            break;
        }
        let mut w = RVec::unit(n, j);
        for u in &basis {
            let coef = w.dot(u) / u.norm2_sq();
            w.add_scaled(&-coef, u);
        }
        if !w.is_zero() {
            basis.push(w);
        }
    }

    let mut rows = Vec::with_capacity(2 * n + safety.rows.len());
    rows.push(HalfSpace::new(d.clone(), d.dot(p) + &dd + &beta));
    rows.push(HalfSpace::new(d.scale(&-Rat::one()), -d.dot(p) + &beta));
    let perp = basis.len() - 1;
    for w in &basis[1..] {
        let share = &budget * w.norm2_sq() / int(perp as i64);
        let width = sqrt_lower_bound(&share, CORRIDOR_SQRT_BITS);
        let offset = w.dot(p);
        rows.push(HalfSpace::new(w.clone(), &offset + &width));
        rows.push(HalfSpace::new(w.scale(&-Rat::one()), -offset + &width));
    }
    rows.extend(safety.rows.iter().cloned());

    for (row, h) in rows.iter().enumerate() {
        let room = h.slack(q);
        if room.is_negative() || &room * &room < &half_eps * &half_eps * h.a.norm2_sq() {
            return Err(CorridorError::BallNotContained { row });
        }
        if !h.slack(p).is_positive() || !h.slack(q).is_positive() {
            return Err(CorridorError::EndpointNotInterior { row });
        }
    }
    Ok(HPolytope::new(rows))
}

/// Exact squared distance from `x` to the segment `p → q`.
pub fn segment_dist_sq(x: &RVec, p: &RVec, q: &RVec) -> Rat {
    let d = q - p;
    let dd = d.norm2_sq();
    if dd.is_zero() {
        return x.dist2_sq(p);
    }
    let t = (x - p).dot(&d) / &dd;
    let t = t.max(Rat::zero()).min(Rat::one());
    let mut foot = p.clone();
    foot.add_scaled(&t, &d);
    x.dist2_sq(&foot)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("a path needs at least two waypoints")]
    TooShort,
    #[error("waypoint {0} has the wrong dimension")]
    Dimension(usize),
    #[error("waypoints {0} and {1} coincide")]
    Repeated(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    waypoints: Vec<RVec>,
}

impl Path {
    pub fn new(waypoints: Vec<RVec>) -> Result<Self, PathError> {
        if waypoints.len() < 2 {
            return Err(PathError::TooShort);
        }
        let n = waypoints[0].len();
        if let Some(i) = waypoints.iter().position(|w| w.len() != n) {
            return Err(PathError::Dimension(i));
        }
        if let Some(i) = waypoints.windows(2).position(|w| w[0] == w[1]) {
            return Err(PathError::Repeated(i, i + 1));
        }
        Ok(Path { waypoints })
    }

    pub fn waypoints(&self) -> &[RVec] {
        &self.waypoints
    }

    pub fn num_segments(&self) -> usize {
        self.waypoints.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentRun {
    pub problem: ReachProblem,
    pub corridor_fallback: bool,
    pub trace: Trace,
    pub achieved: RVec,
    /// `‖achieved - waypoint‖² <= (Σ_{j<=i} ε_j)²`
    pub within_budget: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentReport {
    /// 1-based segment number.
    pub index: usize,
    pub epsilon: Rat,
    /// The corridor could not be certified and the global safety set was
    /// used instead.
    pub corridor_fallback: bool,
    /// Decision on the nominal segment (waypoint to waypoint).
    pub decision: Result<ReachCertificate, String>,
    pub run: Option<SegmentRun>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathReport {
    pub epsilon: Rat,
    pub segments: Vec<SegmentReport>,
    /// `Σ ε_i`, strictly below `epsilon`.
    pub cumulative_tolerance: Rat,
}

impl PathReport {
    pub fn followable(&self) -> bool {
        self.segments
            .iter()
            .all(|s| matches!(&s.decision, Ok(c) if c.is_reachable()))
    }

    pub fn executed(&self) -> bool {
        self.segments.len() > 0
            && self
                .segments
                .iter()
                .all(|s| s.run.as_ref().is_some_and(|r| r.trace.outcome == Outcome::Reached))
    }

    pub fn final_point(&self) -> Option<&RVec> {
        self.segments.last()?.run.as_ref().map(|r| &r.achieved)
    }
}

fn segment_problem(from: &RVec, to: &RVec, eps: &Rat, safety: &HPolytope) -> (ReachProblem, bool) {
    let (safety, fallback) = match build_corridor(from, to, eps, safety) {
        Ok(corridor) => (corridor, false),
        Err(_) => (safety.clone(), true),
    };
    let prob = ReachProblem { x0: from.clone(), xt: to.clone(), epsilon: eps.clone(), safety };
    (prob, fallback)
}

/// Follows the path segment by segment with tolerances `eps·2^{-i}`. Every
/// segment is decided first; only when all are reachable are they played,
/// each from the point the previous segment actually reached.
pub fn follow_path(
    bms: &Bms,
    safety: &HPolytope,
    path: &Path,
    eps: &Rat,
    env: &EnvStrategy,
    max_steps: u64,
) -> PathReport {
    let wps = path.waypoints();
    let mut segments = Vec::with_capacity(path.num_segments());
    let mut cumulative = Rat::zero();
    for i in 1..=path.num_segments() {
        let eps_i = halved(eps, i);
        cumulative += &eps_i;
        let (prob, fallback) = segment_problem(&wps[i - 1], &wps[i], &eps_i, safety);
        let decision = robust_reach(bms, &prob).map_err(|e| e.to_string());
        segments.push(SegmentReport { index: i, epsilon: eps_i, corridor_fallback: fallback, decision, run: None });
    }
    let mut report = PathReport { epsilon: eps.clone(), segments, cumulative_tolerance: cumulative };
    if !report.followable() {
        return report;
    }

    let mut start = wps[0].clone();
    let mut budget = Rat::zero();
    for (k, seg) in report.segments.iter_mut().enumerate() {
        let target = &wps[k + 1];
        budget += &seg.epsilon;
        let (prob, fallback) = segment_problem(&start, target, &seg.epsilon, safety);
        let trace = run_game(bms, &prob, env, max_steps);
        let achieved = trace.final_point().cloned().unwrap_or_else(|| start.clone());
        let within_budget = achieved.dist2_sq(target) <= &budget * &budget;
        let reached = trace.outcome == Outcome::Reached;
        seg.run = Some(SegmentRun { problem: prob, corridor_fallback: fallback, trace, achieved: achieved.clone(), within_budget });
        if !reached {
            break;
        }
        start = achieved;
    }
    report
}

/// Human-readable one-line summary of a tolerance schedule.
pub fn describe_tolerances(report: &PathReport) -> String {
    report
        .segments
        .iter()
        .map(|s| format_rat(&s.epsilon))
        .collect::<Vec<_>>()
        .join(" + ")
}
