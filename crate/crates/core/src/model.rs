//! Systems, problems and the geometric helpers the decision procedure and
//! the scheduler share.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Signed, Zero};

use crate::lp::{self, FeasProblem, FeasResult};
use crate::rat::{format_rat, Rat, RVec};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("system has no modes")]
    NoModes,
    #[error("mode `{0}` has no vertices")]
    NoVertices(String),
    #[error("mode `{mode}` vertex {vertex} has dimension {found}, expected {expected}")]
    VertexDimension {
        mode: String,
        vertex: usize,
        found: usize,
        expected: usize,
    },
}

/// A mode given by the vertex list of its rate polytope. Vertex order is
/// part of the model identity: certificates and traces refer to indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mode {
    name: String,
    vertices: Vec<RVec>,
}

impl Mode {
    pub fn new(name: impl Into<String>, vertices: Vec<RVec>) -> Result<Self, ModelError> {
        let name = name.into();
        let Some(first) = vertices.first() else {
            return Err(ModelError::NoVertices(name));
        };
        let expected = first.len();
        if let Some((vertex, v)) = vertices.iter().enumerate().find(|(_, v)| v.len() != expected) {
            return Err(ModelError::VertexDimension {
                mode: name,
                vertex,
                found: v.len(),
                expected,
            });
        }
        Ok(Mode { name, vertices })
    }

    /// A precise mode with a single rate.
    pub fn precise(name: impl Into<String>, rate: RVec) -> Self {
        Mode {
            name: name.into(),
            vertices: vec![rate],
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vertices(&self) -> &[RVec] {
        &self.vertices
    }

    pub fn vertex(&self, j: usize) -> &RVec {
        &self.vertices[j]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    /// `Σ θ_j · vertex_j`
    pub fn combine(&self, theta: &[Rat]) -> RVec {
        let mut r = RVec::zeros(self.dim());
        for (w, v) in theta.iter().zip(&self.vertices) {
            r.add_scaled(w, v);
        }
        r
    }
}

/// Bounded-rate multi-mode system in vertex representation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bms {
    n: usize,
    modes: Vec<Mode>,
}

impl Bms {
    pub fn new(n: usize, modes: Vec<Mode>) -> Result<Self, ModelError> {
        if modes.is_empty() {
            return Err(ModelError::NoModes);
        }
        for mode in &modes {
            if let Some((vertex, v)) = mode.vertices.iter().enumerate().find(|(_, v)| v.len() != n) {
                return Err(ModelError::VertexDimension {
                    mode: mode.name.clone(),
                    vertex,
                    found: v.len(),
                    expected: n,
                });
            }
        }
        Ok(Bms { n, modes })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> &Mode {
        &self.modes[i]
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    /// The rate chosen for mode `i` by an instance.
    pub fn instance_rate(&self, inst: &CmsInstance, i: usize) -> &RVec {
        self.modes[i].vertex(inst.choice[i])
    }

    pub fn is_valid_instance(&self, inst: &CmsInstance) -> bool {
        inst.choice.len() == self.modes.len()
            && inst
                .choice
                .iter()
                .zip(&self.modes)
                .all(|(&c, m)| c < m.num_vertices())
    }
}

/// Half-space `a · x <= b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HalfSpace {
    pub a: RVec,
    pub b: Rat,
}

impl HalfSpace {
    pub fn new(a: RVec, b: Rat) -> Self {
        HalfSpace { a, b }
    }

    pub fn slack(&self, x: &RVec) -> Rat {
        &self.b - self.a.dot(x)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HPolytope {
    pub rows: Vec<HalfSpace>,
}

impl HPolytope {
    pub fn new(rows: Vec<HalfSpace>) -> Self {
        HPolytope { rows }
    }

    /// Axis-aligned box `lo_j <= x_j <= hi_j`.
    pub fn boxed(bounds: &[(Rat, Rat)]) -> Self {
        let n = bounds.len();
        let mut rows = Vec::with_capacity(2 * n);
        for (j, (lo, hi)) in bounds.iter().enumerate() {
            rows.push(HalfSpace::new(RVec::unit(n, j), hi.clone()));
            rows.push(HalfSpace::new(RVec::unit(n, j).scale(&-Rat::one()), -lo));
        }
        HPolytope { rows }
    }

    pub fn strictly_contains(&self, x: &RVec) -> bool {
        self.rows.iter().all(|r| r.slack(x).is_positive())
    }

    pub fn contains(&self, x: &RVec) -> bool {
        self.rows.iter().all(|r| !r.slack(x).is_negative())
    }

    /// Whether the rows admit a nonzero recession direction. Solved as 2n
    /// feasibility problems `{A d <= 0, ±d_j >= 1}`.
    pub fn is_unbounded(&self, n: usize) -> bool {
        for j in 0..n {
            for sign in [Rat::one(), -Rat::one()] {
                let mut p = FeasProblem::new(n);
                for row in &self.rows {
                    p.push_le(row.a.clone(), Rat::zero());
                }
                p.push_le(RVec::unit(n, j).scale(&-sign), -Rat::one());
                if lp::solve(&p).is_feasible() {
                    return true;
                }
            }
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachProblem {
    pub x0: RVec,
    pub xt: RVec,
    pub epsilon: Rat,
    pub safety: HPolytope,
}

impl ReachProblem {
    pub fn direction(&self) -> RVec {
        &self.xt - &self.x0
    }
}

/// One vertex index per mode: a constant-rate instance of the extreme-rate
/// system.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CmsInstance {
    pub choice: Vec<usize>,
}

impl CmsInstance {
    pub fn new(choice: Vec<usize>) -> Self {
        CmsInstance { choice }
    }
}

impl fmt::Display for CmsInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.choice.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    StartDimension { found: usize, expected: usize },
    TargetDimension { found: usize, expected: usize },
    SafetyRowDimension { row: usize, found: usize, expected: usize },
    StartNotInterior,
    TargetNotInterior,
    EpsilonNotPositive,
    SafetyUnbounded,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::StartDimension { found, expected } => {
                write!(f, "x0 has dimension {found}, expected {expected}")
            }
            Violation::TargetDimension { found, expected } => {
                write!(f, "xt has dimension {found}, expected {expected}")
            }
            Violation::SafetyRowDimension { row, found, expected } => {
                write!(f, "safety row {row} has dimension {found}, expected {expected}")
            }
            Violation::StartNotInterior => write!(f, "x0 not interior"),
            Violation::TargetNotInterior => write!(f, "xt not interior"),
            Violation::EpsilonNotPositive => write!(f, "epsilon must be positive"),
            Violation::SafetyUnbounded => write!(f, "safety unbounded"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join("; "))
    }
}

pub fn validate_problem(bms: &Bms, prob: &ReachProblem) -> ValidationReport {
    let n = bms.dim();
    let mut violations = Vec::new();
    if prob.x0.len() != n {
        violations.push(Violation::StartDimension { found: prob.x0.len(), expected: n });
    }
    if prob.xt.len() != n {
        violations.push(Violation::TargetDimension { found: prob.xt.len(), expected: n });
    }
    for (row, h) in prob.safety.rows.iter().enumerate() {
        if h.a.len() != n {
            violations.push(Violation::SafetyRowDimension { row, found: h.a.len(), expected: n });
        }
    }
    if !prob.epsilon.is_positive() {
        violations.push(Violation::EpsilonNotPositive);
    }
    // geometry only makes sense once every dimension agrees
    if violations.iter().all(|v| matches!(v, Violation::EpsilonNotPositive)) {
        if !prob.safety.strictly_contains(&prob.x0) {
            violations.push(Violation::StartNotInterior);
        }
        if !prob.safety.strictly_contains(&prob.xt) {
            violations.push(Violation::TargetNotInterior);
        }
        if prob.safety.is_unbounded(n) {
            violations.push(Violation::SafetyUnbounded);
        }
    }
    ValidationReport { violations }
}

/// Lexicographic walk over the Cartesian product of vertex indices, mode 0
/// varying slowest.
#[derive(Debug, Clone)]
pub struct Instances {
    radices: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for Instances {
    type Item = CmsInstance;

    fn next(&mut self) -> Option<CmsInstance> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut i = succ.len();
        let mut carried_out = true;
        while i > 0 {
            i -= 1;
            succ[i] += 1;
            if succ[i] < self.radices[i] {
                carried_out = false;
                break;
            }
            succ[i] = 0;
        }
        if !carried_out {
            self.next = Some(succ);
        }
        Some(CmsInstance::new(current))
    }
}

pub fn enumerate_instances(bms: &Bms) -> Instances {
    let radices: Vec<usize> = bms.modes.iter().map(Mode::num_vertices).collect();
    Instances {
        next: Some(vec![0; radices.len()]),
        radices,
    }
}

pub fn instance_count(bms: &Bms) -> BigUint {
    bms.modes
        .iter()
        .fold(BigUint::one(), |acc, m| acc * BigUint::from(m.num_vertices()))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MembershipError {
    #[error("rate has dimension {found}, mode `{mode}` has dimension {expected}")]
    Dimension {
        mode: String,
        found: usize,
        expected: usize,
    },
    #[error("rate {rate} lies outside the rate polytope of mode `{mode}`")]
    Outside { mode: String, rate: RVec },
}

/// Convex coefficients `θ` with `Σ θ_j v_j = rate`, from the exact LP.
pub fn decompose_rate(mode: &Mode, rate: &RVec) -> Result<Vec<Rat>, MembershipError> {
    if rate.len() != mode.dim() {
        return Err(MembershipError::Dimension {
            mode: mode.name.clone(),
            found: rate.len(),
            expected: mode.dim(),
        });
    }
    let k = mode.num_vertices();
    let mut p = FeasProblem::nonneg(k);
    for coord in 0..mode.dim() {
        let coeffs: RVec = mode.vertices.iter().map(|v| v[coord].clone()).collect();
        p.push_eq(coeffs, rate[coord].clone());
    }
    p.push_eq(RVec(vec![Rat::one(); k]), Rat::one());
    match lp::solve(&p) {
        FeasResult::Feasible(theta) => Ok(theta.0),
        FeasResult::Infeasible(_) => Err(MembershipError::Outside {
            mode: mode.name.clone(),
            rate: rate.clone(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("point is not strictly inside the polytope (row {row} has slack {slack})")]
pub struct NotInterior {
    pub row: usize,
    pub slack: String,
}

/// Lower bound on the Euclidean distance from `x` to the boundary:
/// `min (b - a·x) / ‖a‖₁`. Rows with `a = 0` never bound the distance.
pub fn conservative_distance(poly: &HPolytope, x: &RVec) -> Result<Rat, NotInterior> {
    let mut best: Option<Rat> = None;
    for (row, h) in poly.rows.iter().enumerate() {
        let slack = h.slack(x);
        if !slack.is_positive() {
            return Err(NotInterior { row, slack: format_rat(&slack) });
        }
        let norm = h.a.norm1();
        if norm.is_zero() {
            continue;
        }
        let d = slack / norm;
        if best.as_ref().is_none_or(|b| d < *b) {
            best = Some(d);
        }
    }
    // an empty row set bounds nothing; callers reject unbounded sets earlier
    Ok(best.unwrap_or_else(Rat::zero))
}

/// Upper bound on every rate's Euclidean norm: the largest vertex 1-norm.
pub fn max_rate_bound(bms: &Bms) -> Rat {
    bms.modes
        .iter()
        .flat_map(|m| m.vertices.iter())
        .map(RVec::norm1)
        .max()
        .unwrap_or_else(Rat::zero)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::{climb_bms, climb_problem, climb_safety};
    use crate::rat::{int, rat};

    #[test]
    fn climb_problem_is_valid() {
        let report = validate_problem(&climb_bms(), &climb_problem());
        assert!(report.is_valid(), "{report}");
    }

    #[test]
    fn boundary_start_is_rejected() {
        let mut prob = climb_problem();
        prob.x0 = RVec(vec![rat(3, 10), int(0)]);
        let report = validate_problem(&climb_bms(), &prob);
        assert_eq!(report.violations, vec![Violation::StartNotInterior]);
        assert_eq!(report.to_string(), "x0 not interior");
    }

    #[test]
    fn half_plane_safety_is_unbounded() {
        let bms = climb_bms();
        let prob = ReachProblem {
            x0: RVec::from_ints(&[0, 0]),
            xt: RVec::from_ints(&[0, 1]),
            epsilon: rat(1, 10),
            safety: HPolytope::new(vec![HalfSpace::new(RVec::from_ints(&[1, 0]), int(1))]),
        };
        let report = validate_problem(&bms, &prob);
        assert_eq!(report.violations, vec![Violation::SafetyUnbounded]);
    }

    #[test]
    fn dimension_and_epsilon_violations() {
        let mut prob = climb_problem();
        prob.xt = RVec::from_ints(&[0]);
        prob.epsilon = int(0);
        let report = validate_problem(&climb_bms(), &prob);
        assert!(report.violations.contains(&Violation::EpsilonNotPositive));
        assert!(report
            .violations
            .contains(&Violation::TargetDimension { found: 1, expected: 2 }));
    }

    #[test]
    fn enumeration_order_and_count() {
        let bms = climb_bms();
        let all: Vec<_> = enumerate_instances(&bms).map(|i| i.choice).collect();
        assert_eq!(all, vec![vec![0, 0, 0], vec![0, 0, 1]]);
        assert_eq!(instance_count(&bms), BigUint::from(2u32));

        let single = Bms::new(
            1,
            vec![Mode::new("m", vec![RVec::from_ints(&[1]), RVec::from_ints(&[2]), RVec::from_ints(&[3])]).unwrap()],
        )
        .unwrap();
        let all: Vec<_> = enumerate_instances(&single).map(|i| i.choice).collect();
        assert_eq!(all, vec![vec![0], vec![1], vec![2]]);

        let two = |name: &str| {
            Mode::new(name, vec![RVec::from_ints(&[1]), RVec::from_ints(&[-1])]).unwrap()
        };
        let bms = Bms::new(1, vec![two("a"), two("b")]).unwrap();
        let all: Vec<_> = enumerate_instances(&bms).map(|i| i.choice).collect();
        assert_eq!(all, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);

        let four = |name: &str| {
            Mode::new(name, (0..4).map(|k| RVec::from_ints(&[k])).collect()).unwrap()
        };
        let bms = Bms::new(1, vec![four("a"), four("b"), four("c")]).unwrap();
        assert_eq!(instance_count(&bms), BigUint::from(64u32));
        assert_eq!(enumerate_instances(&bms).count(), 64);
    }

    #[test]
    fn rate_decomposition() {
        let bms = climb_bms();
        let m3 = bms.mode(2);
        assert_eq!(
            decompose_rate(m3, &RVec(vec![int(0), rat(8, 5)])).unwrap(),
            vec![rat(1, 2), rat(1, 2)]
        );
        assert_eq!(
            decompose_rate(m3, m3.vertex(0)).unwrap(),
            vec![int(1), int(0)]
        );
        assert!(matches!(
            decompose_rate(m3, &RVec::from_ints(&[0, 0])),
            Err(MembershipError::Outside { .. })
        ));
        assert!(matches!(
            decompose_rate(m3, &RVec::from_ints(&[0])),
            Err(MembershipError::Dimension { .. })
        ));
    }

    #[test]
    fn distances_and_rate_bound() {
        let safety = climb_safety();
        assert_eq!(conservative_distance(&safety, &RVec::from_ints(&[0, 0])).unwrap(), rat(3, 10));
        assert_eq!(conservative_distance(&safety, &RVec::from_ints(&[0, 3])).unwrap(), rat(3, 10));
        let unit = HPolytope::boxed(&[(int(-1), int(1)), (int(-1), int(1))]);
        assert_eq!(conservative_distance(&unit, &RVec::from_ints(&[0, 0])).unwrap(), int(1));
        assert!(conservative_distance(&unit, &RVec::from_ints(&[1, 0])).is_err());

        assert_eq!(max_rate_bound(&climb_bms()), rat(14, 5));
        let single = Bms::new(2, vec![Mode::precise("m", RVec::from_ints(&[1, 0]))]).unwrap();
        assert_eq!(max_rate_bound(&single), int(1));
        let zero = Bms::new(2, vec![Mode::precise("m", RVec::from_ints(&[0, 0]))]).unwrap();
        assert_eq!(max_rate_bound(&zero), int(0));
    }

    #[test]
    fn malformed_models_are_rejected() {
        assert_eq!(Bms::new(1, vec![]), Err(ModelError::NoModes));
        assert!(matches!(Mode::new("m", vec![]), Err(ModelError::NoVertices(_))));
        assert!(Mode::new("m", vec![RVec::from_ints(&[1]), RVec::from_ints(&[1, 2])]).is_err());
        assert!(Bms::new(2, vec![Mode::precise("m", RVec::from_ints(&[1]))]).is_err());
    }
}
