//! Small reference systems used throughout the tests and the CLI docs.

use crate::model::{Bms, HPolytope, Mode, ReachProblem};
use crate::rat::{int, rat, RVec};

/// Three modes in the plane: two precise rates `(-1,-1)` and `(1,-1)`, and
/// the segment between `(-6/5, 8/5)` and `(6/5, 8/5)`.
pub fn climb_bms() -> Bms {
    Bms::new(
        2,
        vec![
            Mode::precise("m1", RVec::from_ints(&[-1, -1])),
            Mode::precise("m2", RVec::from_ints(&[1, -1])),
            Mode::new(
                "m3",
                vec![RVec(vec![rat(-6, 5), rat(8, 5)]), RVec(vec![rat(6, 5), rat(8, 5)])],
            )
            .expect("well-formed mode"),
        ],
    )
    .expect("well-formed system")
}

/// `|x| <= 3/10`, `-3/10 <= y <= 37/10`
pub fn climb_safety() -> HPolytope {
    HPolytope::boxed(&[(rat(-3, 10), rat(3, 10)), (rat(-3, 10), rat(37, 10))])
}

/// From the origin to `(0, 3)` with tolerance `1/10`.
pub fn climb_problem() -> ReachProblem {
    ReachProblem {
        x0: RVec::from_ints(&[0, 0]),
        xt: RVec::from_ints(&[0, 3]),
        epsilon: rat(1, 10),
        safety: climb_safety(),
    }
}

/// One mode whose rates span `conv{(0,1), (0,-1)}`: the environment can
/// always push downward, so `(0,1)` is not robustly reachable.
pub fn updown_bms() -> Bms {
    Bms::new(
        2,
        vec![Mode::new("m", vec![RVec::from_ints(&[0, 1]), RVec::from_ints(&[0, -1])])
            .expect("well-formed mode")],
    )
    .expect("well-formed system")
}

pub fn updown_problem() -> ReachProblem {
    ReachProblem {
        x0: RVec::from_ints(&[0, 0]),
        xt: RVec::from_ints(&[0, 1]),
        epsilon: rat(1, 10),
        safety: HPolytope::boxed(&[(int(-2), int(2)), (int(-2), int(2))]),
    }
}

/// 1D modes `{(1)}` and `{(-1)}`.
pub fn left_right_bms() -> Bms {
    Bms::new(
        1,
        vec![
            Mode::precise("right", RVec::from_ints(&[1])),
            Mode::precise("left", RVec::from_ints(&[-1])),
        ],
    )
    .expect("well-formed system")
}

/// 1D mode `conv{(1), (2)}`: always drifts right.
pub fn drift_bms() -> Bms {
    Bms::new(
        1,
        vec![Mode::new("drift", vec![RVec::from_ints(&[1]), RVec::from_ints(&[2])])
            .expect("well-formed mode")],
    )
    .expect("well-formed system")
}
