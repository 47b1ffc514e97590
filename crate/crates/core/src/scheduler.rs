//! The constructive winning strategy.
//!
//! The scheduler keeps the current point in a redundant form
//!
//! ```text
//! x = x0 + λ·v + Σ_{i,j} π(i,j)·R(i)(j),    v = xt - x0,  λ, π >= 0
//! ```
//!
//! Each round it rewrites that form (using the precomputed time vector
//! `σ(F)` of some instance `F`) until some mode carries no contribution,
//! pumps that mode for a fixed duration `τ`, and records the environment's
//! answer as convex weights on the mode's vertices. Rewriting trades mode
//! contributions for progress in `λ`; every contribution stays below `τ`, so
//! the point never drifts far from the segment `x0 + λ·v`.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};

use crate::decide::{robust_reach, DecideError, ReachCertificate, SigmaTable};
use crate::model::{conservative_distance, max_rate_bound, Bms, CmsInstance, ReachProblem, ValidationReport};
use crate::rat::{Rat, RVec};

/// `(λ, π)` with only the strictly positive `π` entries stored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Projection {
    pub lambda: Rat,
    pub pi: BTreeMap<(usize, usize), Rat>,
}

impl Projection {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn get(&self, mode: usize, vertex: usize) -> Rat {
        self.pi.get(&(mode, vertex)).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn set(&mut self, mode: usize, vertex: usize, value: Rat) {
        if value.is_zero() {
            self.pi.remove(&(mode, vertex));
        } else {
            self.pi.insert((mode, vertex), value);
        }
    }

    /// `Σ_j π(mode, j)`
    pub fn mode_contribution(&self, mode: usize) -> Rat {
        self.pi
            .range((mode, 0)..=(mode, usize::MAX))
            .fold(Rat::zero(), |acc, (_, v)| acc + v)
    }

    pub fn first_contributing_vertex(&self, mode: usize) -> Option<usize> {
        self.pi.range((mode, 0)..=(mode, usize::MAX)).next().map(|(&(_, j), _)| j)
    }

    pub fn is_nonnegative(&self) -> bool {
        !self.lambda.is_negative() && self.pi.values().all(|v| !v.is_negative())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchedulerError {
    #[error("no mode has a positive time in σ; the rewrite step is undefined")]
    EmptySupport,
    #[error("σ has {found} entries but the system has {expected} modes")]
    SigmaShape { expected: usize, found: usize },
    #[error("missing σ entry for instance {0}")]
    MissingSigma(CmsInstance),
    #[error("mode {0} still carries a contribution and cannot be pumped")]
    ModeBusy(usize),
    #[error("mode {mode} has {expected} vertices but θ has {found} weights")]
    ThetaLength { mode: usize, expected: usize, found: usize },
    #[error("θ must be non-negative and sum to one")]
    ThetaNotConvex,
    #[error("observed mode {found} but the pending proposal is {expected:?}")]
    UnexpectedMode { expected: Option<usize>, found: usize },
    #[error("mode index {0} out of range")]
    NoSuchMode(usize),
    #[error("rewriting did not free any mode")]
    Stuck,
}

/// The rewrite step: uses `v = Σ σ_i R_F(i)` to move as much of the
/// instance's contributions into `λ` as the smallest ratio `π_i/σ_i`
/// allows. The minimising entry (lowest mode index on ties) becomes zero,
/// the represented point does not move.
pub fn reduce_comp(p: &Projection, inst: &CmsInstance, sigma: &RVec) -> Result<Projection, SchedulerError> {
    if sigma.len() != inst.choice.len() {
        return Err(SchedulerError::SigmaShape { expected: inst.choice.len(), found: sigma.len() });
    }
    let mut best: Option<(usize, Rat)> = None;
    for (i, s) in sigma.iter().enumerate() {
        if !s.is_positive() {
            continue;
        }
        let ratio = p.get(i, inst.choice[i]) / s;
        if best.as_ref().is_none_or(|(_, r)| ratio < *r) {
            best = Some((i, ratio));
        }
    }
    let (k, ratio) = best.ok_or(SchedulerError::EmptySupport)?;
    let mut out = p.clone();
    if ratio.is_zero() {
        return Ok(out);
    }
    out.lambda += &ratio;
    for (i, s) in sigma.iter().enumerate() {
        if !s.is_positive() {
            continue;
        }
        let j = inst.choice[i];
        let value = if i == k { Rat::zero() } else { p.get(i, j) - &ratio * s };
        out.set(i, j, value);
    }
    Ok(out)
}

/// Rewrites `p` until some mode has zero contribution and returns the
/// lowest-index such mode.
pub fn next_mode(bms: &Bms, p: &Projection, sigma: &SigmaTable) -> Result<(Projection, usize), SchedulerError> {
    let k = bms.num_modes();
    let budget: usize = bms.modes().iter().map(|m| m.num_vertices()).sum::<usize>() + 1;
    let mut current = p.clone();
    for _ in 0..=budget {
        if let Some(free) = (0..k).find(|&i| current.mode_contribution(i).is_zero()) {
            return Ok((current, free));
        }
        let choice: Vec<usize> = (0..k)
            .map(|i| current.first_contributing_vertex(i).expect("every mode contributes here"))
            .collect();
        let inst = CmsInstance::new(choice);
        let s = sigma.get(&inst).ok_or_else(|| SchedulerError::MissingSigma(inst.clone()))?;
        let next = reduce_comp(&current, &inst, s)?;
        if next == current {
            return Err(SchedulerError::Stuck);
        }
        current = next;
    }
    Err(SchedulerError::Stuck)
}

fn check_theta(bms: &Bms, mode: usize, theta: &[Rat]) -> Result<(), SchedulerError> {
    if mode >= bms.num_modes() {
        return Err(SchedulerError::NoSuchMode(mode));
    }
    let expected = bms.mode(mode).num_vertices();
    if theta.len() != expected {
        return Err(SchedulerError::ThetaLength { mode, expected, found: theta.len() });
    }
    let sum = theta.iter().fold(Rat::zero(), |acc, t| acc + t);
    if theta.iter().any(Signed::is_negative) || !sum.is_one() {
        return Err(SchedulerError::ThetaNotConvex);
    }
    Ok(())
}

/// Records the environment's answer `θ` for a mode pumped for `tau`:
/// `π(mode, j) = θ_j·τ`. The mode must start with zero contribution, which
/// makes assignment and accumulation the same thing.
pub fn update_projection(p: &Projection, mode: usize, theta: &[Rat], tau: &Rat) -> Result<Projection, SchedulerError> {
    if !p.mode_contribution(mode).is_zero() {
        return Err(SchedulerError::ModeBusy(mode));
    }
    if theta.iter().any(Signed::is_negative) || !theta.iter().fold(Rat::zero(), |a, t| a + t).is_one() {
        return Err(SchedulerError::ThetaNotConvex);
    }
    let mut out = p.clone();
    for (j, w) in theta.iter().enumerate() {
        out.set(mode, j, w * tau);
    }
    Ok(out)
}

/// `x0 + λ·v + Σ π(i,j)·R(i)(j)`
pub fn reconstruct_point(p: &Projection, x0: &RVec, v: &RVec, bms: &Bms) -> RVec {
    let mut x = x0.clone();
    x.add_scaled(&p.lambda, v);
    for (&(i, j), w) in &p.pi {
        x.add_scaled(w, bms.mode(i).vertex(j));
    }
    x
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchedulerConfig {
    pub x0: RVec,
    pub xt: RVec,
    pub v: RVec,
    pub epsilon: Rat,
    /// Upper bound on every rate norm.
    pub m_hat: Rat,
    /// Lower bounds on the distance of `x0` and `xt` to the safety boundary.
    pub gamma1: Rat,
    pub gamma2: Rat,
    /// `min(ε/2, γ1, γ2)`: the drift radius around `x0 + λ·v`.
    pub radius: Rat,
    pub tau: Rat,
    pub sigma: SigmaTable,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InitError {
    #[error("invalid problem: {0}")]
    InvalidProblem(ValidationReport),
    #[error("target is not robustly reachable (witness instance {witness})")]
    NotRobustlyReachable { witness: CmsInstance, hyperplane: RVec },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Proposal {
    Play { mode: usize, duration: Rat },
    Done,
}

#[derive(Debug, Clone)]
pub struct SchedulerState {
    bms: Bms,
    config: SchedulerConfig,
    x: RVec,
    projection: Projection,
    step_count: u64,
    pending: Option<usize>,
}

pub fn init(bms: &Bms, prob: &ReachProblem) -> Result<SchedulerState, InitError> {
    let sigma = match robust_reach(bms, prob) {
        Ok(ReachCertificate::Reachable(table)) => table,
        Ok(ReachCertificate::Unreachable { witness, hyperplane }) => {
            return Err(InitError::NotRobustlyReachable { witness, hyperplane })
        }
        Err(DecideError::Invalid(report)) => return Err(InitError::InvalidProblem(report)),
        Err(other) => unreachable!("validated problem failed to decide: {other}"),
    };
    let interior = "validated endpoints are interior";
    let gamma1 = conservative_distance(&prob.safety, &prob.x0).expect(interior);
    let gamma2 = conservative_distance(&prob.safety, &prob.xt).expect(interior);
    let half_eps = &prob.epsilon / Rat::from_integer(2.into());
    let radius = [half_eps, gamma1.clone(), gamma2.clone()]
        .into_iter()
        .min()
        .expect("non-empty");
    let m_hat = max_rate_bound(bms);
    // all-zero rates only pass the decision when v = 0, where τ is never used
    let tau = if m_hat.is_positive() {
        &radius / (&m_hat * Rat::from_integer(bms.num_modes().into()))
    } else {
        radius.clone()
    };
    let config = SchedulerConfig {
        x0: prob.x0.clone(),
        xt: prob.xt.clone(),
        v: prob.direction(),
        epsilon: prob.epsilon.clone(),
        m_hat,
        gamma1,
        gamma2,
        radius,
        tau,
        sigma,
    };
    Ok(SchedulerState {
        bms: bms.clone(),
        x: prob.x0.clone(),
        config,
        projection: Projection::zero(),
        step_count: 0,
        pending: None,
    })
}

impl SchedulerState {
    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    pub fn bms(&self) -> &Bms {
        &self.bms
    }

    pub fn x(&self) -> &RVec {
        &self.x
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn lambda(&self) -> &Rat {
        &self.projection.lambda
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn pending(&self) -> Option<usize> {
        self.pending
    }

    pub fn is_done(&self) -> bool {
        self.x.dist2_sq(&self.config.xt) <= &self.config.epsilon * &self.config.epsilon
    }

    pub fn mode_contributions(&self) -> Vec<Rat> {
        (0..self.bms.num_modes()).map(|i| self.projection.mode_contribution(i)).collect()
    }

    /// The point the projection describes; equals [`Self::x`] at all times.
    pub fn represented_point(&self) -> RVec {
        reconstruct_point(&self.projection, &self.config.x0, &self.config.v, &self.bms)
    }

    /// `‖x - (x0 + λ·v)‖²`
    pub fn drift_sq(&self) -> Rat {
        let mut anchor = self.config.x0.clone();
        anchor.add_scaled(&self.projection.lambda, &self.config.v);
        self.x.dist2_sq(&anchor)
    }

    pub fn propose(&mut self) -> Result<Proposal, SchedulerError> {
        if self.is_done() {
            self.pending = None;
            return Ok(Proposal::Done);
        }
        if let Some(mode) = self.pending {
            return Ok(Proposal::Play { mode, duration: self.config.tau.clone() });
        }
        let (projection, mode) = next_mode(&self.bms, &self.projection, &self.config.sigma)?;
        self.projection = projection;
        self.pending = Some(mode);
        Ok(Proposal::Play { mode, duration: self.config.tau.clone() })
    }

    pub fn observe(&mut self, mode: usize, theta: &[Rat]) -> Result<(), SchedulerError> {
        if self.pending != Some(mode) {
            return Err(SchedulerError::UnexpectedMode { expected: self.pending, found: mode });
        }
        check_theta(&self.bms, mode, theta)?;
        let rate = self.bms.mode(mode).combine(theta);
        let projection = update_projection(&self.projection, mode, theta, &self.config.tau)?;
        self.x.add_scaled(&self.config.tau, &rate);
        self.projection = projection;
        self.step_count += 1;
        self.pending = None;
        debug_assert_eq!(self.represented_point(), self.x);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::*;
    use crate::model::Mode;
    use crate::rat::{int, rat};

    fn axes_bms() -> Bms {
        Bms::new(
            2,
            vec![
                Mode::precise("x", RVec::from_ints(&[1, 0])),
                Mode::precise("y", RVec::from_ints(&[0, 1])),
            ],
        )
        .unwrap()
    }

    fn proj(lambda: Rat, entries: &[((usize, usize), Rat)]) -> Projection {
        let mut p = Projection { lambda, ..Default::default() };
        for ((i, j), v) in entries {
            p.set(*i, *j, v.clone());
        }
        p
    }

    #[test]
    fn rewrite_moves_mass_into_lambda() {
        let bms = axes_bms();
        let x0 = RVec::from_ints(&[0, 0]);
        let v = RVec::from_ints(&[1, 1]);
        let inst = CmsInstance::new(vec![0, 0]);
        let p = proj(int(0), &[((0, 0), rat(1, 2)), ((1, 0), rat(1, 4))]);
        let out = reduce_comp(&p, &inst, &RVec::from_ints(&[1, 1])).unwrap();
        assert_eq!(out.lambda, rat(1, 4));
        assert_eq!(out.get(0, 0), rat(1, 4));
        assert_eq!(out.get(1, 0), int(0));
        let before = reconstruct_point(&p, &x0, &v, &bms);
        assert_eq!(before, RVec(vec![rat(1, 2), rat(1, 4)]));
        assert_eq!(reconstruct_point(&out, &x0, &v, &bms), before);
    }

    #[test]
    fn rewrite_ignores_modes_outside_sigma_support() {
        let inst = CmsInstance::new(vec![0, 0]);
        let p = proj(int(0), &[((0, 0), rat(1, 3)), ((1, 0), rat(1, 5))]);
        let out = reduce_comp(&p, &inst, &RVec::from_ints(&[1, 0])).unwrap();
        assert_eq!(out.lambda, rat(1, 3));
        assert_eq!(out.get(0, 0), int(0));
        assert_eq!(out.get(1, 0), rat(1, 5));
    }

    #[test]
    fn rewrite_with_zero_ratio_is_identity() {
        let inst = CmsInstance::new(vec![0, 0]);
        let p = proj(int(0), &[((1, 0), rat(1, 5))]);
        let out = reduce_comp(&p, &inst, &RVec::from_ints(&[1, 1])).unwrap();
        assert_eq!(out, p);
        assert_eq!(
            reduce_comp(&p, &inst, &RVec::from_ints(&[0, 0])),
            Err(SchedulerError::EmptySupport)
        );
    }

    #[test]
    fn next_mode_cases() {
        let bms = climb_bms();
        let sigma = match robust_reach(&bms, &climb_problem()).unwrap() {
            ReachCertificate::Reachable(t) => t,
            _ => unreachable!(),
        };
        let (p, m) = next_mode(&bms, &Projection::zero(), &sigma).unwrap();
        assert_eq!((p, m), (Projection::zero(), 0));

        let partial = proj(int(0), &[((0, 0), rat(1, 168)), ((1, 0), rat(1, 168))]);
        let (p, m) = next_mode(&bms, &partial, &sigma).unwrap();
        assert_eq!((p, m), (partial.clone(), 2));

        let full = proj(
            int(0),
            &[((0, 0), rat(1, 168)), ((1, 0), rat(1, 168)), ((2, 0), rat(1, 168))],
        );
        let (p, m) = next_mode(&bms, &full, &sigma).unwrap();
        assert!(p.mode_contribution(m).is_zero());
        assert!(p.lambda.is_positive());
        let x0 = RVec::from_ints(&[0, 0]);
        let v = RVec::from_ints(&[0, 3]);
        assert_eq!(reconstruct_point(&p, &x0, &v, &bms), reconstruct_point(&full, &x0, &v, &bms));
    }

    #[test]
    fn update_projection_cases() {
        let tau = rat(1, 168);
        let p = update_projection(&Projection::zero(), 2, &[rat(1, 2), rat(1, 2)], &tau).unwrap();
        assert_eq!(p.get(2, 0), rat(1, 336));
        assert_eq!(p.get(2, 1), rat(1, 336));
        assert!(p.lambda.is_zero());

        let p = update_projection(&Projection::zero(), 2, &[int(1), int(0)], &tau).unwrap();
        assert_eq!(p.pi.len(), 1);
        assert_eq!(p.get(2, 0), tau);

        let busy = proj(int(0), &[((2, 0), rat(1, 10))]);
        assert_eq!(
            update_projection(&busy, 2, &[int(1), int(0)], &tau),
            Err(SchedulerError::ModeBusy(2))
        );
    }

    #[test]
    fn reconstruct_endpoints() {
        let bms = climb_bms();
        let x0 = RVec::from_ints(&[1, 2]);
        let v = RVec::from_ints(&[0, 3]);
        assert_eq!(reconstruct_point(&Projection::zero(), &x0, &v, &bms), x0);
        let one = proj(int(1), &[]);
        assert_eq!(reconstruct_point(&one, &x0, &v, &bms), RVec::from_ints(&[1, 5]));
    }

    #[test]
    fn climb_init_and_first_moves() {
        let bms = climb_bms();
        let mut s = init(&bms, &climb_problem()).unwrap();
        assert_eq!(s.config().tau, rat(1, 168));
        assert_eq!(s.config().m_hat, rat(14, 5));
        assert_eq!(s.config().radius, rat(1, 20));
        assert_eq!(s.propose().unwrap(), Proposal::Play { mode: 0, duration: rat(1, 168) });
        s.observe(0, &[int(1)]).unwrap();
        assert_eq!(s.x(), &RVec(vec![rat(-1, 168), rat(-1, 168)]));

        assert_eq!(s.propose().unwrap(), Proposal::Play { mode: 1, duration: rat(1, 168) });
        assert!(matches!(s.observe(2, &[int(1), int(0)]), Err(SchedulerError::UnexpectedMode { .. })));
        s.observe(1, &[int(1)]).unwrap();
        assert_eq!(s.propose().unwrap(), Proposal::Play { mode: 2, duration: rat(1, 168) });
        let before = s.x().clone();
        s.observe(2, &[rat(1, 2), rat(1, 2)]).unwrap();
        assert_eq!(s.x(), &(&before + &RVec(vec![int(0), rat(8, 5)]).scale(&rat(1, 168))));
        assert_eq!(s.represented_point(), *s.x());
    }

    #[test]
    fn pure_vertex_observation() {
        let bms = climb_bms();
        let mut s = init(&bms, &climb_problem()).unwrap();
        for (mode, theta) in [(0, vec![int(1)]), (1, vec![int(1)])] {
            s.propose().unwrap();
            s.observe(mode, &theta).unwrap();
        }
        s.propose().unwrap();
        let before = s.x().clone();
        s.observe(2, &[int(0), int(1)]).unwrap();
        assert_eq!(&(s.x() - &before), &RVec(vec![rat(6, 5), rat(8, 5)]).scale(&rat(1, 168)));
        assert!(matches!(s.observe(2, &[int(0), int(1)]), Err(SchedulerError::UnexpectedMode { .. })));
    }

    #[test]
    fn trivial_and_unreachable_init() {
        let bms = climb_bms();
        let mut prob = climb_problem();
        prob.xt = prob.x0.clone();
        let mut s = init(&bms, &prob).unwrap();
        assert_eq!(s.propose().unwrap(), Proposal::Done);

        match init(&updown_bms(), &updown_problem()) {
            Err(InitError::NotRobustlyReachable { witness, .. }) => assert_eq!(witness.choice, vec![1]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn theta_is_validated() {
        let bms = climb_bms();
        let mut s = init(&bms, &climb_problem()).unwrap();
        s.propose().unwrap();
        assert!(matches!(s.observe(0, &[int(1), int(0)]), Err(SchedulerError::ThetaLength { .. })));
        assert_eq!(s.observe(0, &[rat(1, 2)]), Err(SchedulerError::ThetaNotConvex));
    }
}
