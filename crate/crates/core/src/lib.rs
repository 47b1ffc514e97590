//! Robust reachability for bounded-rate multi-mode systems.
//!
//! A scheduler picks a mode and a duration; an adversarial environment then
//! picks any rate inside that mode's rate polytope. This crate decides, with
//! exact rational arithmetic, whether the scheduler can steer the state into
//! every ε-ball around a target without leaving a convex safety set, and
//! plays the winning strategy when it can.

pub mod decide;
pub mod examples;
pub mod format;
pub mod lp;
pub mod model;
pub mod rat;
pub mod reductions;
pub mod scheduler;
pub mod sim;
pub mod testkit;

pub use decide::{robust_reach, verify_certificate, ReachCertificate, SigmaTable};
pub use model::{Bms, CmsInstance, HPolytope, HalfSpace, Mode, ReachProblem};
pub use rat::{Rat, RVec};
