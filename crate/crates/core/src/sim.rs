//! Scheduler against environment: the game loop, environment strategies,
//! and an independent trace checker.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{enumerate_instances, Bms, CmsInstance, ReachProblem};
use crate::rat::{Rat, RVec};
use crate::scheduler::{self, InitError, Proposal, SchedulerState};

/// Denominator of the dyadic weights drawn by [`EnvStrategy::RandomMix`].
pub const RANDOM_MIX_RESOLUTION: u32 = 16;

pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnvStrategy {
    /// Always answer with the vertex the instance picks for the mode.
    FixedInstance(CmsInstance),
    /// Random dyadic convex weights from a seeded generator.
    RandomMix(u64),
    /// The vertex that ends up farthest from the target.
    GreedyAdversary,
    /// Scripted answers, one `(mode, θ)` per step.
    Replay(Vec<(usize, Vec<Rat>)>),
}

impl EnvStrategy {
    /// The `index`-th instance in enumeration order.
    pub fn fixed_by_index(bms: &Bms, index: usize) -> Option<Self> {
        enumerate_instances(bms).nth(index).map(EnvStrategy::FixedInstance)
    }
}

/// Picks the vertex `j` that maximises `‖x + τ·R(mode)(j) - xt‖²` (lowest
/// index on ties) and answers with the unit weight on it.
pub fn greedy_adversary_move(bms: &Bms, xt: &RVec, x: &RVec, mode: usize, tau: &Rat) -> Vec<Rat> {
    let m = bms.mode(mode);
    let mut best: Option<(usize, Rat)> = None;
    for (j, vertex) in m.vertices().iter().enumerate() {
        let mut next = x.clone();
        next.add_scaled(tau, vertex);
        let d = next.dist2_sq(xt);
        if best.as_ref().is_none_or(|(_, b)| d > *b) {
            best = Some((j, d));
        }
    }
    let (pick, _) = best.expect("modes have vertices");
    unit_theta(m.num_vertices(), pick)
}

fn unit_theta(len: usize, at: usize) -> Vec<Rat> {
    (0..len)
        .map(|j| if j == at { Rat::one() } else { Rat::zero() })
        .collect()
}

/// Convex weights with denominator `2^RANDOM_MIX_RESOLUTION`, as gaps
/// between sorted cut points.
fn random_theta(rng: &mut ChaCha8Rng, len: usize) -> Vec<Rat> {
    let scale: u64 = 1 << RANDOM_MIX_RESOLUTION;
    let mut cuts: Vec<u64> = (0..len - 1).map(|_| rng.gen_range(0..=scale)).collect();
    cuts.push(0);
    cuts.push(scale);
    cuts.sort_unstable();
    let denom = BigInt::from(scale);
    cuts.windows(2)
        .map(|w| Rat::new(BigInt::from(w[1] - w[0]), denom.clone()))
        .collect()
}

enum EnvSession<'a> {
    Fixed(&'a CmsInstance),
    Random(ChaCha8Rng),
    Greedy,
    Replay(std::slice::Iter<'a, (usize, Vec<Rat>)>),
}

impl<'a> EnvSession<'a> {
    fn new(strategy: &'a EnvStrategy) -> Self {
        match strategy {
            EnvStrategy::FixedInstance(inst) => EnvSession::Fixed(inst),
            EnvStrategy::RandomMix(seed) => EnvSession::Random(ChaCha8Rng::seed_from_u64(*seed)),
            EnvStrategy::GreedyAdversary => EnvSession::Greedy,
            EnvStrategy::Replay(moves) => EnvSession::Replay(moves.iter()),
        }
    }

    fn answer(&mut self, s: &SchedulerState, mode: usize) -> Result<Vec<Rat>, String> {
        let bms = s.bms();
        let len = bms.mode(mode).num_vertices();
        match self {
            EnvSession::Fixed(inst) => match inst.choice.get(mode) {
                Some(&j) if j < len => Ok(unit_theta(len, j)),
                _ => Err(format!("instance {inst} has no valid vertex for mode {mode}")),
            },
            EnvSession::Random(rng) => Ok(random_theta(rng, len)),
            EnvSession::Greedy => Ok(greedy_adversary_move(bms, &s.config().xt, s.x(), mode, &s.config().tau)),
            EnvSession::Replay(moves) => match moves.next() {
                Some((m, theta)) if *m == mode => Ok(theta.clone()),
                Some((m, _)) => Err(format!("replay answers mode {m} but mode {mode} was proposed")),
                None => Err("replay exhausted".to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRecord {
    pub mode: usize,
    pub theta: Vec<Rat>,
    pub duration: Rat,
    pub x_before: RVec,
    pub x_after: RVec,
    /// `λ` after the step's rewrite (the rewrite leaves the point alone).
    pub lambda: Rat,
    /// `Σ_j π(i,j)` per mode after the step.
    pub contributions: Vec<Rat>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Reached,
    NotRobustlyReachable(CmsInstance),
    StepLimit,
    ContractViolation(String),
    InvalidProblem(String),
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Reached => write!(f, "reached"),
            Outcome::NotRobustlyReachable(w) => write!(f, "not robustly reachable (witness {w})"),
            Outcome::StepLimit => write!(f, "step limit"),
            Outcome::ContractViolation(why) => write!(f, "contract violation: {why}"),
            Outcome::InvalidProblem(why) => write!(f, "invalid problem: {why}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub steps: Vec<StepRecord>,
    pub outcome: Outcome,
}

impl Trace {
    /// Last visited point, if any step was taken.
    pub fn final_point(&self) -> Option<&RVec> {
        self.steps.last().map(|s| &s.x_after)
    }

    pub fn final_lambda(&self) -> Option<&Rat> {
        self.steps.last().map(|s| &s.lambda)
    }
}

/// Plays the scheduler against `env` until the target ball is reached, the
/// step budget runs out, or a player breaks the protocol.
pub fn run_game(bms: &Bms, prob: &ReachProblem, env: &EnvStrategy, max_steps: u64) -> Trace {
    let mut steps = Vec::new();
    let mut s = match scheduler::init(bms, prob) {
        Ok(s) => s,
        Err(InitError::NotRobustlyReachable { witness, .. }) => {
            return Trace { steps, outcome: Outcome::NotRobustlyReachable(witness) }
        }
        Err(InitError::InvalidProblem(report)) => {
            return Trace { steps, outcome: Outcome::InvalidProblem(report.to_string()) }
        }
    };
    let mut session = EnvSession::new(env);
    let outcome = loop {
        let (mode, duration) = match s.propose() {
            Ok(Proposal::Done) => break Outcome::Reached,
            Ok(Proposal::Play { mode, duration }) => (mode, duration),
            Err(e) => break Outcome::ContractViolation(e.to_string()),
        };
        if steps.len() as u64 >= max_steps {
            break Outcome::StepLimit;
        }
        let theta = match session.answer(&s, mode) {
            Ok(theta) => theta,
            Err(why) => break Outcome::ContractViolation(why),
        };
        let x_before = s.x().clone();
        if let Err(e) = s.observe(mode, &theta) {
            break Outcome::ContractViolation(e.to_string());
        }
        steps.push(StepRecord {
            mode,
            theta,
            duration,
            x_before,
            x_after: s.x().clone(),
            lambda: s.lambda().clone(),
            contributions: s.mode_contributions(),
        });
    };
    Trace { steps, outcome }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceIssue {
    /// Visited point (step index, or `None` for the start) is not strictly safe.
    Unsafe(Option<usize>),
    Chaining(usize),
    BadTheta(usize),
    Duration(usize),
    ModeMismatch(usize),
    LambdaRecord(usize),
    ContributionRecord(usize),
    ProjectionIdentity(usize),
    Negative(usize),
    LambdaDecrease(usize),
    LambdaBound(usize),
    DriftBound(usize),
    ModeBudget(usize),
    /// No strict `λ` increase over the window of steps starting here.
    NoProgress(usize),
    /// Reached but the last point is outside the target ball.
    NotInBall,
    /// The recorded outcome disagrees with the replayed scheduler.
    Outcome(String),
}

impl fmt::Display for TraceIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceIssue::Unsafe(None) => write!(f, "start point outside the safety interior"),
            TraceIssue::Unsafe(Some(i)) => write!(f, "step {i}: point outside the safety interior"),
            TraceIssue::Chaining(i) => write!(f, "step {i}: x_after != x_before + duration * rate"),
            TraceIssue::BadTheta(i) => write!(f, "step {i}: weights are not a convex combination"),
            TraceIssue::Duration(i) => write!(f, "step {i}: duration differs from tau"),
            TraceIssue::ModeMismatch(i) => write!(f, "step {i}: mode differs from the scheduler's choice"),
            TraceIssue::LambdaRecord(i) => write!(f, "step {i}: recorded lambda differs from replay"),
            TraceIssue::ContributionRecord(i) => write!(f, "step {i}: recorded contributions differ from replay"),
            TraceIssue::ProjectionIdentity(i) => write!(f, "step {i}: projection does not represent the point"),
            TraceIssue::Negative(i) => write!(f, "step {i}: negative projection entry"),
            TraceIssue::LambdaDecrease(i) => write!(f, "step {i}: lambda decreased"),
            TraceIssue::LambdaBound(i) => write!(f, "step {i}: lambda exceeds 1 + eps/(2|v|)"),
            TraceIssue::DriftBound(i) => write!(f, "step {i}: drift from x0 + lambda v exceeds the radius"),
            TraceIssue::ModeBudget(i) => write!(f, "step {i}: a mode carries more than tau"),
            TraceIssue::NoProgress(i) => write!(f, "steps {i}..: lambda did not increase over |M|+1 steps"),
            TraceIssue::NotInBall => write!(f, "outcome is reached but the final point is outside the target ball"),
            TraceIssue::Outcome(why) => write!(f, "outcome mismatch: {why}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TraceReport {
    pub issues: Vec<TraceIssue>,
}

impl TraceReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Re-checks a trace from scratch: exact chaining and safety of every
/// visited point, convexity of every answer, and a deterministic replay of
/// the scheduler that confirms each mode choice and the strategy's
/// invariants (projection identity, `λ` monotone and bounded, drift within
/// the radius, per-mode budget, progress over every `|M|+1` steps).
pub fn check_trace(trace: &Trace, bms: &Bms, prob: &ReachProblem) -> TraceReport {
    let mut issues = Vec::new();
    let mut s = match scheduler::init(bms, prob) {
        Ok(s) => s,
        Err(e) => {
            let consistent = match (&e, &trace.outcome) {
                (InitError::NotRobustlyReachable { witness, .. }, Outcome::NotRobustlyReachable(w)) => w == witness,
                (InitError::InvalidProblem(_), Outcome::InvalidProblem(_)) => true,
                _ => false,
            };
            if !consistent || !trace.steps.is_empty() {
                issues.push(TraceIssue::Outcome(format!("scheduler refuses to start: {e}")));
            }
            return TraceReport { issues };
        }
    };
    if matches!(trace.outcome, Outcome::NotRobustlyReachable(_) | Outcome::InvalidProblem(_)) {
        issues.push(TraceIssue::Outcome("scheduler starts on this problem".into()));
        return TraceReport { issues };
    }
    if !prob.safety.strictly_contains(&prob.x0) {
        issues.push(TraceIssue::Unsafe(None));
    }

    let cfg = s.config().clone();
    let radius_sq = &cfg.radius * &cfg.radius;
    let eps_sq = &cfg.epsilon * &cfg.epsilon;
    let v_sq = cfg.v.norm2_sq();
    let four = Rat::from_integer(4.into());
    let mut lambdas: Vec<Rat> = Vec::with_capacity(trace.steps.len());
    let mut replay_ok = true;
    let mut prev_after = prob.x0.clone();

    for (i, step) in trace.steps.iter().enumerate() {
        let before_issues = issues.len();
        if step.x_before != prev_after {
            issues.push(TraceIssue::Chaining(i));
        }
        prev_after = step.x_after.clone();
        let theta_ok = step.mode < bms.num_modes()
            && step.theta.len() == bms.mode(step.mode).num_vertices()
            && step.theta.iter().all(|t| !t.is_negative())
            && step.theta.iter().fold(Rat::zero(), |a, t| a + t).is_one();
        if !theta_ok {
            issues.push(TraceIssue::BadTheta(i));
        } else {
            let mut expected = step.x_before.clone();
            expected.add_scaled(&step.duration, &bms.mode(step.mode).combine(&step.theta));
            if expected != step.x_after {
                issues.push(TraceIssue::Chaining(i));
            }
        }
        if step.duration != cfg.tau {
            issues.push(TraceIssue::Duration(i));
        }
        if step.x_after.len() != bms.dim() || !prob.safety.strictly_contains(&step.x_after) {
            issues.push(TraceIssue::Unsafe(Some(i)));
        }
        lambdas.push(step.lambda.clone());

        if !replay_ok {
            continue;
        }
        match s.propose() {
            Ok(Proposal::Play { mode, .. }) if mode == step.mode => {}
            _ => {
                issues.push(TraceIssue::ModeMismatch(i));
                replay_ok = false;
                continue;
            }
        }
        if s.x() != &step.x_before || !theta_ok || s.observe(step.mode, &step.theta).is_err() {
            replay_ok = false;
            if issues.len() == before_issues {
                issues.push(TraceIssue::Chaining(i));
            }
            continue;
        }
        if s.lambda() != &step.lambda {
            issues.push(TraceIssue::LambdaRecord(i));
        }
        if !step.contributions.is_empty() && s.mode_contributions() != step.contributions {
            issues.push(TraceIssue::ContributionRecord(i));
        }
        if s.represented_point() != *s.x() {
            issues.push(TraceIssue::ProjectionIdentity(i));
        }
        if !s.projection().is_nonnegative() {
            issues.push(TraceIssue::Negative(i));
        }
        if i > 0 && s.lambda() < &lambdas[i - 1] {
            issues.push(TraceIssue::LambdaDecrease(i));
        }
        let excess = s.lambda() - Rat::one();
        if excess.is_positive() && &four * &excess * &excess * &v_sq > eps_sq {
            issues.push(TraceIssue::LambdaBound(i));
        }
        if s.drift_sq() > radius_sq {
            issues.push(TraceIssue::DriftBound(i));
        }
        if s.mode_contributions().iter().any(|c| c > &cfg.tau) {
            issues.push(TraceIssue::ModeBudget(i));
        }
    }

    let window = bms.num_modes();
    for start in 0..lambdas.len().saturating_sub(window) {
        if lambdas[start + window] <= lambdas[start] {
            issues.push(TraceIssue::NoProgress(start));
        }
    }

    let last = trace.final_point().unwrap_or(&prob.x0);
    let in_ball = last.dist2_sq(&prob.xt) <= eps_sq;
    match &trace.outcome {
        Outcome::Reached if !in_ball => issues.push(TraceIssue::NotInBall),
        Outcome::StepLimit | Outcome::ContractViolation(_) if in_ball => {
            issues.push(TraceIssue::Outcome("final point already inside the target ball".into()))
        }
        _ => {}
    }
    TraceReport { issues }
}
