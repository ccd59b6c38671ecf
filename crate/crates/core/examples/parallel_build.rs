//! Builds and solves with a serial plan and a uniform parallel plan, and
//! confirms the answers agree.

use hps::linalg::C64;
use hps::planner::{ThreadPair, ThreadPlan};
use hps::problem::ManufacturedSolution;
use hps::solver::build;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = ManufacturedSolution::gaussian_benchmark(8.0);
    let spec = m.spec();
    let (levels, n_c) = (8, 12);
    let threads = std::thread::available_parallelism().map_or(2, |n| n.get()).max(2);

    let serial = ThreadPlan::serial(levels);
    let parallel = ThreadPlan::uniform(
        levels,
        ThreadPair {
            outer: threads,
            inner: 1,
        },
    );
    let mut answers = Vec::new();
    for (name, plan) in [("serial", &serial), ("parallel", &parallel)] {
        let state = build(&spec, levels, n_c, plan)?;
        let sol = state.solve(&spec, plan)?;
        println!(
            "{name:8} build {:.3}s solve {:.4}s e_inf {:.3e}",
            state.build_seconds(),
            sol.seconds(),
            sol.max_error(&state.tree, |x, y| m.exact(x, y))
        );
        answers.push(sol.u);
    }
    let diff = answers[0]
        .iter()
        .zip(&answers[1])
        .map(|(a, b): (&C64, &C64)| (a - b).norm())
        .fold(0.0, f64::max);
    println!("max |u_serial - u_parallel| = {diff:.3e}");
    Ok(())
}
