//! Random thread plans must reproduce the serial answer.

use hps::linalg::C64;
use hps::planner::{ThreadPair, ThreadPlan};
use hps::problem::ManufacturedSolution;
use hps::solver::build;
use proptest::prelude::*;

fn random_plan(levels: usize, budget: usize, picks: &[(usize, usize)]) -> ThreadPlan {
    let mut plan = ThreadPlan::serial(levels);
    plan.budget = budget;
    let mut it = picks.iter().cycle();
    for stage in [&mut plan.build, &mut plan.upward, &mut plan.downward] {
        for (level, pair) in stage.iter_mut().enumerate() {
            let &(o, i) = it.next().unwrap();
            let outer = (1 + o % budget).min(1 << level);
            let inner = 1 + i % (budget / outer);
            *pair = ThreadPair { outer, inner };
        }
    }
    plan
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_plans_match_serial(
        levels in 2usize..6,
        budget in 1usize..7,
        picks in proptest::collection::vec((0usize..8, 0usize..8), 1..20),
        kappa in 0.5f64..4.0,
    ) {
        let m = ManufacturedSolution::gaussian_benchmark(kappa).with_eta(C64::new(kappa, 0.5));
        let spec = m.spec();
        let serial = ThreadPlan::serial(levels);
        let plan = random_plan(levels, budget, &picks);
        plan.validate(&hps::geometry::build_uniform_tree(spec.domain, levels, 8).unwrap()).unwrap();
        let a = build(&spec, levels, 8, &serial).unwrap();
        let b = build(&spec, levels, 8, &plan).unwrap();
        let ua = a.solve(&spec, &serial).unwrap().u;
        let ub = b.solve(&spec, &plan).unwrap().u;
        let uc = a.solve(&spec, &plan).unwrap().u;
        let d1 = ua.iter().zip(&ub).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        let d2 = ua.iter().zip(&uc).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        prop_assert!(d1 <= 1e-12 && d2 <= 1e-12, "{} {} with {}", d1, d2, plan.describe());
    }
}

#[test]
fn over_budget_plan_is_rejected() {
    let spec = ManufacturedSolution::gaussian_benchmark(1.0).spec();
    let mut plan = ThreadPlan::serial(3);
    plan.budget = 2;
    plan.build[2] = ThreadPair { outer: 2, inner: 2 };
    assert!(build(&spec, 3, 8, &plan).is_err());
}
