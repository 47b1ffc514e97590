//! Exact rational linear feasibility.
//!
//! A phase-1 simplex over [`Rat`] with Bland's pivoting rule. Every answer
//! carries a checkable witness: a basic feasible point, or a Farkas
//! multiplier vector proving that no point exists.
//!
//! Farkas orientation: the multiplier vector `y` has one entry per row, the
//! equality rows first and then the inequality rows. An inequality row
//! `a·t <= b` is read in its `>=` form `-a·t >= -b` and must get `y >= 0`.
//! The certificate is valid when the combined coefficients are `<= 0` on
//! every non-negative variable, `= 0` on every free variable, and the
//! combined right-hand side is `> 0`. For a conic system `R t = v, t >= 0`
//! this is the familiar `yᵀR <= 0, yᵀv > 0`.

use std::collections::BTreeSet;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::rat::{Rat, RVec};

/// One linear row `coeffs · t (=|<=) rhs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Row {
    pub coeffs: RVec,
    #[serde(with = "crate::rat::serde_rat")]
    pub rhs: Rat,
}

impl Row {
    pub fn new(coeffs: RVec, rhs: Rat) -> Self {
        Row { coeffs, rhs }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeasProblem {
    pub num_vars: usize,
    pub eq: Vec<Row>,
    /// `coeffs · t <= rhs`
    pub ineq: Vec<Row>,
    pub nonneg: BTreeSet<usize>,
}

impl FeasProblem {
    pub fn new(num_vars: usize) -> Self {
        FeasProblem {
            num_vars,
            ..Default::default()
        }
    }

    /// Problem over `num_vars` variables that are all constrained `>= 0`.
    pub fn nonneg(num_vars: usize) -> Self {
        FeasProblem {
            num_vars,
            nonneg: (0..num_vars).collect(),
            ..Default::default()
        }
    }

    pub fn push_eq(&mut self, coeffs: RVec, rhs: Rat) {
        debug_assert_eq!(coeffs.len(), self.num_vars);
        self.eq.push(Row::new(coeffs, rhs));
    }

    pub fn push_le(&mut self, coeffs: RVec, rhs: Rat) {
        debug_assert_eq!(coeffs.len(), self.num_vars);
        self.ineq.push(Row::new(coeffs, rhs));
    }

    pub fn num_rows(&self) -> usize {
        self.eq.len() + self.ineq.len()
    }

    fn well_formed(&self) -> bool {
        self.eq
            .iter()
            .chain(&self.ineq)
            .all(|r| r.coeffs.len() == self.num_vars)
            && self.nonneg.iter().all(|&j| j < self.num_vars)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeasResult {
    Feasible(RVec),
    Infeasible(RVec),
}

impl FeasResult {
    pub fn is_feasible(&self) -> bool {
        matches!(self, FeasResult::Feasible(_))
    }
}

/// Column of the standard-form tableau.
#[derive(Debug, Clone, Copy)]
enum Column {
    /// `+t_j`
    Pos(usize),
    /// `-t_j` (second half of a free variable split)
    Neg(usize),
    Slack,
    Artificial,
}

pub fn solve(p: &FeasProblem) -> FeasResult {
    assert!(p.well_formed(), "malformed feasibility problem");
    let m = p.num_rows();

    let mut columns = Vec::new();
    for j in 0..p.num_vars {
        columns.push(Column::Pos(j));
        if !p.nonneg.contains(&j) {
            columns.push(Column::Neg(j));
        }
    }
    let num_structural = columns.len();
    let num_slack = p.ineq.len();
    columns.extend(std::iter::repeat_n(Column::Slack, num_slack));
    let art_start = columns.len();
    columns.extend(std::iter::repeat_n(Column::Artificial, m));
    let width = columns.len();

    // Tableau rows: [columns..., rhs], each row scaled so rhs >= 0.
    let mut signs = Vec::with_capacity(m);
    let mut tab: Vec<Vec<Rat>> = Vec::with_capacity(m);
    for (r, row) in p.eq.iter().chain(&p.ineq).enumerate() {
        let mut line = vec![Rat::zero(); width + 1];
        let mut c = 0;
        for (j, a) in row.coeffs.iter().enumerate() {
            line[c] = a.clone();
            c += 1;
            if !p.nonneg.contains(&j) {
                line[c] = -a;
                c += 1;
            }
        }
        if r >= p.eq.len() {
            line[num_structural + (r - p.eq.len())] = Rat::one();
        }
        line[width] = row.rhs.clone();
        let sign = if row.rhs.is_negative() { -1 } else { 1 };
        if sign < 0 {
            for v in line.iter_mut() {
                *v = -&*v;
            }
        }
        line[art_start + r] = Rat::one();
        signs.push(sign);
        tab.push(line);
    }
    let mut basis: Vec<usize> = (art_start..art_start + m).collect();

    // Phase-1 reduced costs: cost 1 on artificials.
    let mut cost = vec![Rat::zero(); width + 1];
    for line in &tab {
        for (j, v) in line.iter().enumerate() {
            if j < art_start || j == width {
                cost[j] -= v;
            }
        }
    }

    loop {
        // Bland: lowest-index column with negative reduced cost.
        let Some(enter) = (0..width).find(|&j| cost[j].is_negative()) else {
            break;
        };
        let mut leave: Option<(usize, Rat)> = None;
        for (r, line) in tab.iter().enumerate() {
            if !line[enter].is_positive() {
                continue;
            }
            let ratio = &line[width] / &line[enter];
            leave = match leave {
                None => Some((r, ratio)),
                Some((best, best_ratio)) => {
                    if ratio < best_ratio || (ratio == best_ratio && basis[r] < basis[best]) {
                        Some((r, ratio))
                    } else {
                        Some((best, best_ratio))
                    }
                }
            };
        }
        // Phase 1 is bounded below by zero, so a leaving row always exists.
        let (pivot_row, _) = leave.expect("phase-1 objective cannot be unbounded");
        pivot(&mut tab, &mut cost, pivot_row, enter);
        basis[pivot_row] = enter;
    }

    // cost[width] holds minus the phase-1 objective.
    if cost[width].is_zero() {
        let mut t = RVec::zeros(p.num_vars);
        for (r, &col) in basis.iter().enumerate() {
            match columns[col] {
                Column::Pos(j) => t[j] += &tab[r][width],
                Column::Neg(j) => t[j] -= &tab[r][width],
                Column::Slack | Column::Artificial => {}
            }
        }
        return FeasResult::Feasible(t);
    }

    // y = c_B B^{-1}; B^{-1} sits in the artificial columns.
    let mut y = RVec::zeros(m);
    for (r, &col) in basis.iter().enumerate() {
        if col >= art_start {
            for i in 0..m {
                y[i] += &tab[r][art_start + i];
            }
        }
    }
    for (i, sign) in signs.iter().enumerate() {
        if *sign < 0 {
            y[i] = -&y[i];
        }
        // inequality multipliers refer to the `>=` form of the row
        if i >= p.eq.len() {
            y[i] = -&y[i];
        }
    }
    FeasResult::Infeasible(y)
}

fn pivot(tab: &mut [Vec<Rat>], cost: &mut [Rat], pivot_row: usize, enter: usize) {
    let inv = tab[pivot_row][enter].recip();
    for v in tab[pivot_row].iter_mut() {
        *v *= &inv;
    }
    let pivot_line = tab[pivot_row].clone();
    for (r, line) in tab.iter_mut().enumerate() {
        if r == pivot_row || line[enter].is_zero() {
            continue;
        }
        let factor = line[enter].clone();
        for (v, pv) in line.iter_mut().zip(&pivot_line) {
            if !pv.is_zero() {
                *v -= &factor * pv;
            }
        }
    }
    if !cost[enter].is_zero() {
        let factor = cost[enter].clone();
        for (v, pv) in cost.iter_mut().zip(&pivot_line) {
            if !pv.is_zero() {
                *v -= &factor * pv;
            }
        }
    }
}

pub fn verify_solution(p: &FeasProblem, t: &RVec) -> bool {
    if t.len() != p.num_vars || !p.well_formed() {
        return false;
    }
    p.eq.iter().all(|r| r.coeffs.dot(t) == r.rhs)
        && p.ineq.iter().all(|r| r.coeffs.dot(t) <= r.rhs)
        && p.nonneg.iter().all(|&j| !t[j].is_negative())
}

pub fn verify_farkas(p: &FeasProblem, y: &RVec) -> bool {
    if y.len() != p.num_rows() || !p.well_formed() {
        return false;
    }
    let neq = p.eq.len();
    if y.iter().skip(neq).any(Signed::is_negative) {
        return false;
    }
    let mut combined = RVec::zeros(p.num_vars);
    let mut rhs = Rat::zero();
    for (i, row) in p.eq.iter().chain(&p.ineq).enumerate() {
        let weight = if i < neq { y[i].clone() } else { -&y[i] };
        combined.add_scaled(&weight, &row.coeffs);
        rhs += &weight * &row.rhs;
    }
    let coeffs_ok = combined.iter().enumerate().all(|(j, c)| {
        if p.nonneg.contains(&j) {
            !c.is_positive()
        } else {
            c.is_zero()
        }
    });
    coeffs_ok && rhs.is_positive()
}
