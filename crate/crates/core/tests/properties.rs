use num_traits::{One, Signed, Zero};
use proptest::prelude::*;

use robreach::decide::{cms_solve, instance_system, robust_reach};
use robreach::examples::{climb_bms, climb_problem};
use robreach::format::{model_to_json, parse_model};
use robreach::lp::{self, FeasProblem, FeasResult};
use robreach::model::{
    conservative_distance, decompose_rate, enumerate_instances, max_rate_bound, Bms, CmsInstance, HPolytope, Mode,
    ReachProblem,
};
use robreach::rat::{int, rat, Rat, RVec};
use robreach::scheduler::{reconstruct_point, reduce_comp, Projection};
use robreach::testkit::{fm_feasibility_oracle, random_bms};
use robreach::SigmaTable;

fn small_rat() -> impl Strategy<Value = Rat> {
    (-12i64..=12, 1i64..=6).prop_map(|(p, q)| rat(p, q))
}

fn small_vec(n: usize) -> impl Strategy<Value = RVec> {
    prop::collection::vec(small_rat(), n).prop_map(RVec)
}

fn convex_weights(len: usize) -> impl Strategy<Value = Vec<Rat>> {
    prop::collection::vec(0i64..=8, len).prop_map(|w| {
        let total: i64 = w.iter().sum();
        if total == 0 {
            let mut unit = vec![Rat::zero(); w.len()];
            unit[0] = Rat::one();
            unit
        } else {
            w.iter().map(|&x| rat(x, total)).collect()
        }
    })
}

fn problem_for(bms: &Bms, xt: RVec) -> ReachProblem {
    let half = int(30);
    ReachProblem {
        x0: RVec::zeros(bms.dim()),
        xt,
        epsilon: rat(1, 10),
        safety: HPolytope::boxed(&vec![(-half.clone(), half); bms.dim()]),
    }
}

/// Robust reachability by checking every instance with the elimination oracle.
fn reach_by_oracle(bms: &Bms, prob: &ReachProblem) -> bool {
    let v = prob.direction();
    enumerate_instances(bms).all(|inst| fm_feasibility_oracle(&instance_system(bms, &inst, &v)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decomposition_reproduces_rate(seed in 0u64..10_000, weights in convex_weights(3)) {
        let bms = random_bms(2, 1, 3, 6, seed);
        let mode = bms.mode(0);
        let theta = &weights[..mode.num_vertices()];
        let total: Rat = theta.iter().cloned().sum();
        prop_assume!(total.is_positive());
        let theta: Vec<Rat> = theta.iter().map(|t| t / &total).collect();
        let rate = mode.combine(&theta);
        let back = decompose_rate(mode, &rate).unwrap();
        prop_assert!(back.iter().all(|t| !t.is_negative()));
        prop_assert_eq!(back.iter().cloned().sum::<Rat>(), Rat::one());
        prop_assert_eq!(mode.combine(&back), rate);
    }

    #[test]
    fn conservative_distance_is_a_lower_bound(lo in small_vec(3), width in small_vec(3), t in convex_weights(2)) {
        let bounds: Vec<(Rat, Rat)> = lo.iter().zip(width.iter()).map(|(l, w)| (l.clone(), l + w.abs() + Rat::one())).collect();
        let poly = HPolytope::boxed(&bounds);
        // a point strictly inside: mix of the box centre and a corner
        let x: RVec = bounds
            .iter()
            .map(|(a, b)| {
                let centre = (a + b) / int(2);
                &centre * (Rat::one() + &t[0]) / int(2) + a * &t[1] / int(2)
            })
            .collect();
        prop_assume!(poly.strictly_contains(&x));
        let d = conservative_distance(&poly, &x).unwrap();
        prop_assert!(d.is_positive());
        for h in &poly.rows {
            let slack = h.slack(&x);
            prop_assert!(&d * &d * h.a.norm2_sq() <= &slack * &slack);
        }
    }

    #[test]
    fn rate_bound_dominates_every_rate(seed in 0u64..10_000, weights in convex_weights(4)) {
        let bms = random_bms(3, 3, 4, 9, seed);
        let m = max_rate_bound(&bms);
        for mode in bms.modes() {
            let theta = &weights[..mode.num_vertices()];
            let total: Rat = theta.iter().cloned().sum();
            let rate = if total.is_positive() {
                mode.combine(&theta.iter().map(|t| t / &total).collect::<Vec<_>>())
            } else {
                mode.vertex(0).clone()
            };
            prop_assert!(&m * &m >= rate.norm2_sq());
        }
    }

    #[test]
    fn reduce_comp_keeps_point_and_signs(entries in prop::collection::vec((0usize..3, 0usize..2, 0i64..20), 1..8), choice in 0usize..2) {
        let bms = climb_bms();
        let prob = climb_problem();
        let v = prob.direction();
        let cert = robust_reach(&bms, &prob).unwrap();
        let table: SigmaTable = match cert { robreach::ReachCertificate::Reachable(t) => t, _ => unreachable!() };
        let mut p = Projection::zero();
        for (i, j, w) in entries {
            let j = j.min(bms.mode(i).num_vertices() - 1);
            p.set(i, j, rat(w, 7));
        }
        let inst = CmsInstance::new(vec![0, 0, choice]);
        let sigma = &table[&inst];
        let q = reduce_comp(&p, &inst, sigma).unwrap();
        prop_assert_eq!(reconstruct_point(&q, &prob.x0, &v, &bms), reconstruct_point(&p, &prob.x0, &v, &bms));
        prop_assert!(q.is_nonnegative());
        prop_assert!(q.lambda >= p.lambda);
    }

    #[test]
    fn lp_answers_carry_valid_certificates(
        vars in 1usize..6,
        rows in prop::collection::vec((prop::collection::vec(-10i64..=10, 6), -10i64..=10, any::<bool>()), 1..5),
        free_mask in 0u8..64,
    ) {
        let mut p = FeasProblem::new(vars);
        p.nonneg = (0..vars).filter(|j| free_mask >> j & 1 == 0).collect();
        for (coeffs, rhs, is_eq) in rows {
            let c = RVec::from_ints(&coeffs[..vars]);
            if is_eq { p.push_eq(c, int(rhs)) } else { p.push_le(c, int(rhs)) }
        }
        let result = lp::solve(&p);
        match &result {
            FeasResult::Feasible(t) => prop_assert!(lp::verify_solution(&p, t)),
            FeasResult::Infeasible(y) => prop_assert!(lp::verify_farkas(&p, y)),
        }
        prop_assert_eq!(result.is_feasible(), fm_feasibility_oracle(&p).unwrap());
    }

    #[test]
    fn decision_matches_instance_oracle(seed in 0u64..10_000, target in small_vec(2)) {
        let bms = random_bms(2, 3, 2, 4, seed);
        let prob = problem_for(&bms, target);
        prop_assume!(!prob.direction().is_zero());
        let cert = robust_reach(&bms, &prob).unwrap();
        prop_assert_eq!(cert.is_reachable(), reach_by_oracle(&bms, &prob));
        prop_assert!(robreach::verify_certificate(&bms, &prob, &cert));
    }

    #[test]
    fn duplicate_vertex_does_not_change_verdict(seed in 0u64..10_000, target in small_vec(2), which in 0usize..3) {
        let bms = random_bms(2, 3, 2, 4, seed);
        let prob = problem_for(&bms, target);
        prop_assume!(!prob.direction().is_zero());
        let modes: Vec<Mode> = bms.modes().iter().enumerate().map(|(i, m)| {
            let mut vs = m.vertices().to_vec();
            if i == which { vs.push(vs[0].clone()); }
            Mode::new(m.name(), vs).unwrap()
        }).collect();
        let dup = Bms::new(2, modes).unwrap();
        prop_assert_eq!(robust_reach(&bms, &prob).unwrap().is_reachable(), robust_reach(&dup, &prob).unwrap().is_reachable());
    }

    #[test]
    fn positive_scaling_does_not_change_verdict(seed in 0u64..10_000, target in small_vec(2), k in 1i64..5) {
        let bms = random_bms(2, 3, 2, 4, seed);
        let prob = problem_for(&bms, target.clone());
        prop_assume!(!prob.direction().is_zero());
        let factor = rat(k, 2);
        let scaled_prob = problem_for(&bms, target.scale(&factor));
        let modes: Vec<Mode> = bms.modes().iter().map(|m| {
            Mode::new(m.name(), m.vertices().iter().map(|v| v.scale(&factor)).collect()).unwrap()
        }).collect();
        let faster = Bms::new(2, modes).unwrap();
        let base = robust_reach(&bms, &prob).unwrap().is_reachable();
        prop_assert_eq!(base, robust_reach(&bms, &scaled_prob).unwrap().is_reachable());
        prop_assert_eq!(base, robust_reach(&faster, &prob).unwrap().is_reachable());
    }

    #[test]
    fn model_json_round_trip(seed in 0u64..10_000, target in small_vec(3)) {
        let bms = random_bms(3, 3, 3, 50, seed);
        let prob = problem_for(&bms, target);
        let (b, p) = parse_model(&model_to_json(&bms, &prob)).unwrap();
        prop_assert_eq!(b, bms);
        prop_assert_eq!(p, prob);
    }

    #[test]
    fn cms_solutions_solve_the_equation(seed in 0u64..10_000, target in small_vec(2)) {
        let bms = random_bms(2, 3, 1, 5, seed);
        let inst = CmsInstance::new(vec![0; 3]);
        if let FeasResult::Feasible(t) = cms_solve(&bms, &inst, &RVec::zeros(2), &target).unwrap() {
            let mut x = RVec::zeros(2);
            for (i, ti) in t.iter().enumerate() {
                prop_assert!(!ti.is_negative());
                x.add_scaled(ti, bms.instance_rate(&inst, i));
            }
            prop_assert_eq!(x, target);
        }
    }
}
