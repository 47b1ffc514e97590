//! Reference oracles and generators for cross-checking the decision
//! procedure: DNF validity instances, a Fourier–Motzkin feasibility check
//! and seeded random models.

use std::collections::BTreeSet;

use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lp::FeasProblem;
use crate::model::{Bms, HPolytope, Mode, ReachProblem};
use crate::rat::{int, rat, Rat, RVec};

/// A literal `x_var` (positive) or `¬x_var`; variables are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub var: usize,
    pub positive: bool,
}

impl Literal {
    pub fn new(var: usize, positive: bool) -> Self {
        Literal { var, positive }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DnfError {
    #[error("need at least 3 propositions, got {0}")]
    TooFewVariables(usize),
    #[error("clause {clause} has {found} literals, expected 3")]
    Arity { clause: usize, found: usize },
    #[error("clause {clause} mentions variable {var} more than once")]
    RepeatedVariable { clause: usize, var: usize },
    #[error("clause {clause} mentions variable {var}, out of range")]
    VariableRange { clause: usize, var: usize },
    #[error("literal sign must be 1 or -1, got {0}")]
    Sign(i64),
}

/// Disjunction of conjunctive 3-literal clauses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDnf", into = "RawDnf")]
pub struct DnfFormula {
    n: usize,
    clauses: Vec<[Literal; 3]>,
}

#[derive(Serialize, Deserialize)]
struct RawDnf {
    n: usize,
    clauses: Vec<Vec<(usize, i64)>>,
}

impl TryFrom<RawDnf> for DnfFormula {
    type Error = DnfError;
    fn try_from(raw: RawDnf) -> Result<Self, DnfError> {
        let mut clauses = Vec::with_capacity(raw.clauses.len());
        for (ci, c) in raw.clauses.iter().enumerate() {
            if c.len() != 3 {
                return Err(DnfError::Arity { clause: ci, found: c.len() });
            }
            let mut lits = [Literal::new(0, true); 3];
            for (slot, &(var, sign)) in lits.iter_mut().zip(c) {
                *slot = match sign {
                    1 => Literal::new(var, true),
                    -1 => Literal::new(var, false),
                    other => return Err(DnfError::Sign(other)),
                };
            }
            clauses.push(lits);
        }
        DnfFormula::new(raw.n, clauses)
    }
}

impl From<DnfFormula> for RawDnf {
    fn from(f: DnfFormula) -> Self {
        RawDnf {
            n: f.n,
            clauses: f
                .clauses
                .iter()
                .map(|c| c.iter().map(|l| (l.var, if l.positive { 1 } else { -1 })).collect())
                .collect(),
        }
    }
}

impl DnfFormula {
    pub fn new(n: usize, clauses: Vec<[Literal; 3]>) -> Result<Self, DnfError> {
        if n < 3 {
            return Err(DnfError::TooFewVariables(n));
        }
        for (ci, c) in clauses.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for l in c {
                if l.var >= n {
                    return Err(DnfError::VariableRange { clause: ci, var: l.var });
                }
                if !seen.insert(l.var) {
                    return Err(DnfError::RepeatedVariable { clause: ci, var: l.var });
                }
            }
        }
        Ok(DnfFormula { n, clauses })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn clauses(&self) -> &[[Literal; 3]] {
        &self.clauses
    }

    pub fn eval(&self, assignment: &[bool]) -> bool {
        self.clauses
            .iter()
            .any(|c| c.iter().all(|l| assignment[l.var] == l.positive))
    }

    /// All eight sign patterns over the first three variables: a tautology.
    pub fn all_patterns(n: usize) -> Self {
        let clauses = (0..8u8)
            .map(|mask| {
                let lit = |j: usize| Literal::new(j, mask >> j & 1 == 1);
                [lit(0), lit(1), lit(2)]
            })
            .collect();
        DnfFormula::new(n, clauses).expect("three distinct variables")
    }

    /// Seeded random formula with `m` clauses over `n` variables.
    pub fn random(n: usize, m: usize, seed: u64) -> Self {
        assert!(n >= 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clauses = (0..m)
            .map(|_| {
                let vars = rand::seq::index::sample(&mut rng, n, 3);
                let mut lits = [Literal::new(0, true); 3];
                for (slot, v) in lits.iter_mut().zip(vars.iter()) {
                    *slot = Literal::new(v, rng.gen_bool(0.5));
                }
                lits.sort();
                lits
            })
            .collect();
        DnfFormula::new(n, clauses).expect("distinct sampled variables")
    }
}

/// Number of modes produced by [`dnf_to_bms`] before deduplication can only
/// shrink it: `1 + (7m + 1) + (2n + 1)`.
pub fn dnf_mode_bound(f: &DnfFormula) -> usize {
    7 * f.clauses.len() + 2 * f.n + 3
}

/// Reachability problem that is robustly reachable iff `f` is valid.
///
/// Coordinates are `x_1..x_n, y1, y2, y3`. The environment picks the `x`
/// values in the single uncertain mode `m_e`; the scheduler has to cancel
/// them with one time unit of clause modes and `n-3` units of correction
/// modes.
pub fn dnf_to_bms(f: &DnfFormula) -> (Bms, ReachProblem) {
    let n = f.n;
    let dim = n + 3;
    let (y1, y2, y3) = (n, n + 1, n + 2);
    let mut modes = Vec::new();

    let env_vertices = (0..1usize << n)
        .map(|mask| {
            let mut v = RVec::zeros(dim);
            for j in 0..n {
                v[j] = if mask >> (n - 1 - j) & 1 == 1 { int(1) } else { int(-1) };
            }
            v[y1] = int(1);
            v
        })
        .collect();
    modes.push(Mode::new("m_e", env_vertices).expect("uniform dimension"));

    let mut seen: BTreeSet<Vec<Literal>> = BTreeSet::new();
    let mut subclauses: Vec<Vec<Literal>> = Vec::new();
    for c in &f.clauses {
        for mask in 1..8u8 {
            let sub: Vec<Literal> = (0..3).filter(|j| mask >> j & 1 == 1).map(|j| c[j]).collect();
            let mut key = sub.clone();
            key.sort();
            if seen.insert(key) {
                subclauses.push(sub);
            }
        }
    }
    subclauses.push(Vec::new());
    for (k, sub) in subclauses.iter().enumerate() {
        let mut v = RVec::zeros(dim);
        for l in sub {
            v[l.var] = if l.positive { int(-1) } else { int(1) };
        }
        v[y2] = int(1);
        modes.push(Mode::precise(format!("clause_{k}"), v));
    }

    for j in 0..n {
        for (suffix, sign) in [("+", 1), ("-", -1)] {
            let mut v = RVec::zeros(dim);
            v[j] = int(sign);
            v[y3] = int(1);
            modes.push(Mode::precise(format!("m_{}{suffix}", j + 1), v));
        }
    }
    let mut v = RVec::zeros(dim);
    v[y3] = int(1);
    modes.push(Mode::precise("m_0", v));

    let bms = Bms::new(dim, modes).expect("uniform dimension");
    let mut xt = RVec::zeros(dim);
    xt[y1] = int(1);
    xt[y2] = int(1);
    xt[y3] = int(n as i64 - 3);
    let mut bounds = vec![(int(-2), int(2)); n + 2];
    bounds.push((int(-1), int(n as i64)));
    let prob = ReachProblem {
        x0: RVec::zeros(dim),
        xt,
        epsilon: rat(1, 8),
        safety: HPolytope::boxed(&bounds),
    };
    (bms, prob)
}

/// Largest `n` the truth-table oracle accepts.
pub const DNF_ORACLE_MAX_VARS: usize = 20;

/// Truth-table validity check.
pub fn dnf_validity_oracle(f: &DnfFormula) -> bool {
    assert!(f.n <= DNF_ORACLE_MAX_VARS, "truth table too large");
    let mut assignment = vec![false; f.n];
    (0..1u32 << f.n).all(|mask| {
        for (j, a) in assignment.iter_mut().enumerate() {
            *a = mask >> j & 1 == 1;
        }
        f.eval(&assignment)
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FmError {
    #[error("{0} variables exceed the elimination limit")]
    TooManyVariables(usize),
    #[error("intermediate system grew past {0} inequalities")]
    TooManyRows(usize),
}

pub const FM_MAX_VARS: usize = 10;
pub const FM_MAX_ROWS: usize = 20_000;

/// `coeffs · t <= rhs`, scaled so the first nonzero coefficient is ±1.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Ineq {
    coeffs: Vec<Rat>,
    rhs: Rat,
}

impl Ineq {
    fn normalized(coeffs: Vec<Rat>, rhs: Rat) -> Ineq {
        match coeffs.iter().find(|c| !c.is_zero()) {
            Some(lead) => {
                let s = lead.abs();
                Ineq { coeffs: coeffs.iter().map(|c| c / &s).collect(), rhs: rhs / s }
            }
            None => Ineq { coeffs, rhs },
        }
    }
}

fn substitute(coeffs: &mut [Rat], rhs: &mut Rat, pivot: usize, expr: &[Rat], expr_rhs: &Rat) {
    // t_pivot = expr_rhs - expr · t
    let c = std::mem::replace(&mut coeffs[pivot], Rat::zero());
    if c.is_zero() {
        return;
    }
    for (k, e) in expr.iter().enumerate() {
        if k != pivot {
            coeffs[k] -= &c * e;
        }
    }
    *rhs -= &c * expr_rhs;
}

/// Feasibility by equality substitution followed by Fourier–Motzkin
/// elimination. Shares no code with the simplex solver.
pub fn fm_feasibility_oracle(p: &FeasProblem) -> Result<bool, FmError> {
    let n = p.num_vars;
    if n > FM_MAX_VARS {
        return Err(FmError::TooManyVariables(n));
    }
    let mut eqs: Vec<(Vec<Rat>, Rat)> = p.eq.iter().map(|r| (r.coeffs.0.clone(), r.rhs.clone())).collect();
    let mut ineqs: Vec<(Vec<Rat>, Rat)> = p.ineq.iter().map(|r| (r.coeffs.0.clone(), r.rhs.clone())).collect();
    for &j in &p.nonneg {
        let mut c = vec![Rat::zero(); n];
        c[j] = -Rat::one();
        ineqs.push((c, Rat::zero()));
    }

    while let Some((coeffs, rhs)) = eqs.pop() {
        let Some(pivot) = coeffs.iter().position(|c| !c.is_zero()) else {
            if !rhs.is_zero() {
                return Ok(false);
            }
            continue;
        };
        let a = coeffs[pivot].clone();
        let expr: Vec<Rat> = coeffs.iter().map(|c| c / &a).collect();
        let expr_rhs = &rhs / &a;
        for (c, r) in eqs.iter_mut().chain(ineqs.iter_mut()) {
            substitute(c, r, pivot, &expr, &expr_rhs);
        }
    }

    let mut rows: BTreeSet<Ineq> = ineqs.into_iter().map(|(c, r)| Ineq::normalized(c, r)).collect();
    for j in 0..n {
        let (mut pos, mut neg, mut rest) = (Vec::new(), Vec::new(), BTreeSet::new());
        for row in rows {
            if row.coeffs[j].is_positive() {
                pos.push(row);
            } else if row.coeffs[j].is_negative() {
                neg.push(row);
            } else {
                rest.insert(row);
            }
        }
        for up in &pos {
            for lo in &neg {
                let (a, b) = (&up.coeffs[j], -&lo.coeffs[j]);
                let coeffs: Vec<Rat> = up.coeffs.iter().zip(&lo.coeffs).map(|(u, l)| u * &b + l * a).collect();
                let rhs = &up.rhs * &b + &lo.rhs * a;
                rest.insert(Ineq::normalized(coeffs, rhs));
                if rest.len() > FM_MAX_ROWS {
                    return Err(FmError::TooManyRows(FM_MAX_ROWS));
                }
            }
        }
        rows = rest;
    }
    Ok(rows.iter().all(|r| !r.rhs.is_negative()))
}

/// Seeded random model: coordinates `p/q` with `|p| <= coeff_bound` and
/// `1 <= q <= coeff_bound`.
pub fn random_bms(n: usize, k_modes: usize, max_vertices: usize, coeff_bound: i64, seed: u64) -> Bms {
    assert!(n >= 1 && k_modes >= 1 && max_vertices >= 1 && coeff_bound >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = (0..k_modes)
        .map(|i| {
            let count = rng.gen_range(1..=max_vertices);
            let vertices = (0..count)
                .map(|_| {
                    (0..n)
                        .map(|_| rat(rng.gen_range(-coeff_bound..=coeff_bound), rng.gen_range(1..=coeff_bound)))
                        .collect()
                })
                .collect();
            Mode::new(format!("m{i}"), vertices).expect("generated vertices")
        })
        .collect();
    Bms::new(n, modes).expect("uniform dimension")
}

/// Seeded random system `A t = b, t >= 0` with at most `max_eqs` rows and
/// `max_vars` columns, integer entries in `[-coeff_bound, coeff_bound]`.
/// Half of the systems get a right-hand side built from a nonnegative point
/// so that both verdicts show up.
pub fn random_feas_problem(max_eqs: usize, max_vars: usize, coeff_bound: i64, seed: u64) -> FeasProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars = rng.gen_range(1..=max_vars);
    let eqs = rng.gen_range(1..=max_eqs);
    let planted = rng.gen_bool(0.5);
    let point: Vec<Rat> = (0..vars).map(|_| int(rng.gen_range(0..=3))).collect();
    let mut p = FeasProblem::nonneg(vars);
    for _ in 0..eqs {
        let coeffs: RVec = (0..vars).map(|_| int(rng.gen_range(-coeff_bound..=coeff_bound))).collect();
        let rhs = if planted {
            coeffs.dot(&RVec(point.clone()))
        } else {
            int(rng.gen_range(-coeff_bound..=coeff_bound))
        };
        p.push_eq(coeffs, rhs);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decide::{instance_system, robust_reach};
    use crate::examples::{climb_bms, climb_problem};
    use crate::model::{enumerate_instances, validate_problem};

    fn one_clause() -> DnfFormula {
        DnfFormula::new(3, vec![[Literal::new(0, true), Literal::new(1, true), Literal::new(2, true)]]).unwrap()
    }

    #[test]
    fn dnf_oracle_examples() {
        assert!(dnf_validity_oracle(&DnfFormula::all_patterns(3)));
        assert!(!dnf_validity_oracle(&one_clause()));
        assert!(!dnf_validity_oracle(&DnfFormula::new(3, vec![]).unwrap()));
    }

    #[test]
    fn dnf_validation() {
        let l = Literal::new;
        assert_eq!(DnfFormula::new(2, vec![]), Err(DnfError::TooFewVariables(2)));
        assert_eq!(
            DnfFormula::new(3, vec![[l(0, true), l(0, false), l(2, true)]]),
            Err(DnfError::RepeatedVariable { clause: 0, var: 0 })
        );
        let bad: Result<DnfFormula, _> = serde_json::from_str(r#"{"n":3,"clauses":[[[0,1],[1,1]]]}"#);
        assert!(bad.is_err());
        let f: DnfFormula = serde_json::from_str(r#"{"n":3,"clauses":[[[0,1],[1,-1],[2,1]]]}"#).unwrap();
        assert_eq!(f.clauses()[0][1], l(1, false));
        let back: DnfFormula = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn dnf_construction_counts() {
        let (bms, prob) = dnf_to_bms(&one_clause());
        assert_eq!(bms.num_modes(), 16);
        assert_eq!(bms.dim(), 6);
        assert_eq!(dnf_mode_bound(&one_clause()), 16);
        assert_eq!(bms.mode(0).num_vertices(), 8);
        assert_eq!(prob.xt, RVec::from_ints(&[0, 0, 0, 1, 1, 0]));
        assert!(validate_problem(&bms, &prob).is_valid());
        // positive literal drives its variable down
        assert_eq!(bms.mode(1).vertex(0), &RVec::from_ints(&[-1, 0, 0, 0, 1, 0]));

        let f = DnfFormula::random(6, 4, 3);
        let (bms, prob) = dnf_to_bms(&f);
        assert!(bms.num_modes() <= dnf_mode_bound(&f));
        assert_eq!(bms.dim(), 9);
        assert!(validate_problem(&bms, &prob).is_valid());
    }

    #[test]
    fn dnf_reduction_small_cases() {
        let (bms, prob) = dnf_to_bms(&DnfFormula::all_patterns(3));
        assert!(robust_reach(&bms, &prob).unwrap().is_reachable());
        let (bms, prob) = dnf_to_bms(&one_clause());
        assert!(!robust_reach(&bms, &prob).unwrap().is_reachable());
    }

    #[test]
    fn fm_examples() {
        let mut p = FeasProblem::nonneg(1);
        p.push_eq(RVec::from_ints(&[1]), int(1));
        assert_eq!(fm_feasibility_oracle(&p), Ok(true));
        let mut p = FeasProblem::nonneg(1);
        p.push_eq(RVec::from_ints(&[1]), int(-1));
        assert_eq!(fm_feasibility_oracle(&p), Ok(false));

        let bms = climb_bms();
        let v = climb_problem().direction();
        for inst in enumerate_instances(&bms) {
            assert_eq!(fm_feasibility_oracle(&instance_system(&bms, &inst, &v)), Ok(true));
        }
        assert_eq!(fm_feasibility_oracle(&FeasProblem::nonneg(11)), Err(FmError::TooManyVariables(11)));
    }

    #[test]
    fn fm_handles_free_variables_and_inequalities() {
        // t0 free, t1 >= 0: t0 - t1 = 2, t0 <= 1 -> infeasible
        let mut p = FeasProblem::new(2);
        p.nonneg.insert(1);
        p.push_eq(RVec::from_ints(&[1, -1]), int(2));
        p.push_le(RVec::from_ints(&[1, 0]), int(1));
        assert_eq!(fm_feasibility_oracle(&p), Ok(false));
        p.ineq[0].rhs = int(3);
        assert_eq!(fm_feasibility_oracle(&p), Ok(true));
    }

    #[test]
    fn generators_are_deterministic() {
        let a = random_bms(2, 3, 2, 10, 1);
        assert_eq!(a, random_bms(2, 3, 2, 10, 1));
        assert_eq!(a.dim(), 2);
        assert_eq!(a.num_modes(), 3);
        let single = random_bms(1, 1, 1, 1, 7);
        assert_eq!(single.num_modes(), 1);
        assert_eq!(single.mode(0).num_vertices(), 1);
        assert_eq!(random_feas_problem(4, 6, 10, 9), random_feas_problem(4, 6, 10, 9));
        assert_eq!(DnfFormula::random(4, 3, 2), DnfFormula::random(4, 3, 2));
    }
}
