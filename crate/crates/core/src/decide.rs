//! Robust reachability decision with certificates.
//!
//! The target is robustly reachable iff every constant-rate instance of the
//! extreme-rate system reaches it, i.e. iff for every instance `F` there is
//! `t >= 0` with `x0 + Σ_i t_i R_F(i) = xt`. A reachable verdict carries one
//! such `t` per instance; an unreachable verdict carries the first failing
//! instance together with a separating functional.

use std::collections::BTreeMap;

use num_traits::Signed;
use rayon::prelude::*;

use crate::lp::{self, FeasProblem, FeasResult};
use crate::model::{enumerate_instances, validate_problem, Bms, CmsInstance, ReachProblem, ValidationReport};
use crate::rat::RVec;

/// Time vector `σ(F)` for every instance `F`, keyed in enumeration order.
pub type SigmaTable = BTreeMap<CmsInstance, RVec>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReachCertificate {
    Reachable(SigmaTable),
    Unreachable { witness: CmsInstance, hyperplane: RVec },
}

impl ReachCertificate {
    pub fn is_reachable(&self) -> bool {
        matches!(self, ReachCertificate::Reachable(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecideError {
    #[error("invalid problem: {0}")]
    Invalid(ValidationReport),
    #[error("dimension mismatch: system has dimension {expected}, points have {found}")]
    Dimension { expected: usize, found: usize },
    #[error("instance {0} does not match the system")]
    BadInstance(CmsInstance),
}

/// The system `Σ_i t_i R_F(i) = v, t >= 0` over one variable per mode.
pub fn instance_system(bms: &Bms, inst: &CmsInstance, v: &RVec) -> FeasProblem {
    let k = bms.num_modes();
    let mut p = FeasProblem::nonneg(k);
    for coord in 0..bms.dim() {
        let coeffs: RVec = (0..k).map(|i| bms.instance_rate(inst, i)[coord].clone()).collect();
        p.push_eq(coeffs, v[coord].clone());
    }
    p
}

fn check_shapes(bms: &Bms, inst: &CmsInstance, x0: &RVec, xt: &RVec) -> Result<(), DecideError> {
    for p in [x0, xt] {
        if p.len() != bms.dim() {
            return Err(DecideError::Dimension { expected: bms.dim(), found: p.len() });
        }
    }
    if !bms.is_valid_instance(inst) {
        return Err(DecideError::BadInstance(inst.clone()));
    }
    Ok(())
}

/// Solves the constant-rate reachability system of one instance.
pub fn cms_solve(bms: &Bms, inst: &CmsInstance, x0: &RVec, xt: &RVec) -> Result<FeasResult, DecideError> {
    check_shapes(bms, inst, x0, xt)?;
    Ok(lp::solve(&instance_system(bms, inst, &(xt - x0))))
}

pub fn cms_reach(bms: &Bms, inst: &CmsInstance, x0: &RVec, xt: &RVec) -> Result<Option<RVec>, DecideError> {
    Ok(match cms_solve(bms, inst, x0, xt)? {
        FeasResult::Feasible(t) => Some(t),
        FeasResult::Infeasible(_) => None,
    })
}

const CHUNK: usize = 64;

pub fn robust_reach(bms: &Bms, prob: &ReachProblem) -> Result<ReachCertificate, DecideError> {
    let report = validate_problem(bms, prob);
    if !report.is_valid() {
        return Err(DecideError::Invalid(report));
    }
    let v = prob.direction();
    let mut table = SigmaTable::new();
    let mut instances = enumerate_instances(bms).peekable();
    while instances.peek().is_some() {
        let chunk: Vec<CmsInstance> = instances.by_ref().take(CHUNK).collect();
        // results come back in chunk order whatever the worker scheduling
        let solved: Vec<FeasResult> = chunk
            .par_iter()
            .map(|inst| lp::solve(&instance_system(bms, inst, &v)))
            .collect();
        for (inst, result) in chunk.into_iter().zip(solved) {
            match result {
                FeasResult::Feasible(t) => {
                    table.insert(inst, t);
                }
                FeasResult::Infeasible(y) => {
                    return Ok(ReachCertificate::Unreachable { witness: inst, hyperplane: y });
                }
            }
        }
    }
    Ok(ReachCertificate::Reachable(table))
}

/// Why a certificate was rejected.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CertificateFault {
    #[error("problem is invalid: {0}")]
    InvalidProblem(ValidationReport),
    #[error("instance {0} is missing from the table")]
    MissingInstance(CmsInstance),
    #[error("table entry {0} is not an instance of the system")]
    UnknownInstance(CmsInstance),
    #[error("time vector of instance {0} fails the reachability equation")]
    BadSigma(CmsInstance),
    #[error("witness {0} is not an instance of the system")]
    BadWitness(CmsInstance),
    #[error("hyperplane does not separate the target from the cone of witness {0}")]
    BadHyperplane(CmsInstance),
}

pub fn check_certificate(bms: &Bms, prob: &ReachProblem, cert: &ReachCertificate) -> Result<(), CertificateFault> {
    let report = validate_problem(bms, prob);
    if !report.is_valid() {
        return Err(CertificateFault::InvalidProblem(report));
    }
    let v = prob.direction();
    match cert {
        ReachCertificate::Reachable(table) => {
            for inst in table.keys() {
                if !bms.is_valid_instance(inst) {
                    return Err(CertificateFault::UnknownInstance(inst.clone()));
                }
            }
            for inst in enumerate_instances(bms) {
                let Some(sigma) = table.get(&inst) else {
                    return Err(CertificateFault::MissingInstance(inst));
                };
                if !lp::verify_solution(&instance_system(bms, &inst, &v), sigma) {
                    return Err(CertificateFault::BadSigma(inst));
                }
            }
            Ok(())
        }
        ReachCertificate::Unreachable { witness, hyperplane } => {
            if !bms.is_valid_instance(witness) {
                return Err(CertificateFault::BadWitness(witness.clone()));
            }
            let separates = hyperplane.len() == bms.dim()
                && (0..bms.num_modes()).all(|i| !hyperplane.dot(bms.instance_rate(witness, i)).is_positive())
                && hyperplane.dot(&v).is_positive();
            if separates {
                Ok(())
            } else {
                Err(CertificateFault::BadHyperplane(witness.clone()))
            }
        }
    }
}

pub fn verify_certificate(bms: &Bms, prob: &ReachProblem, cert: &ReachCertificate) -> bool {
    check_certificate(bms, prob, cert).is_ok()
}
