//! Builds once, saves the operators, reloads them and solves for several
//! boundary data sets without refactoring anything.

use hps::linalg::{op_counts, C64};
use hps::planner::ThreadPlan;
use hps::problem::ManufacturedSolution;
use hps::solver::{build, checkpoint};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (levels, n_c, kappa) = (8, 12, 6.0);
    let plan = ThreadPlan::serial(levels);
    let first = ManufacturedSolution::homogeneous_wave(kappa, C64::new(kappa, 0.0), 0.0);
    let state = build(&first.spec(), levels, n_c, &plan)?;
    println!(
        "build {:.3}s, {} MB of operators",
        state.build_seconds(),
        state.operator_bytes() >> 20
    );

    let dir = std::env::temp_dir().join(format!("hps-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("state.bin");
    checkpoint::save(&state, &path)?;
    let loaded = checkpoint::load(&path)?;

    for angle in [0.0, 0.8, 2.0, 4.0] {
        let wave = ManufacturedSolution::homogeneous_wave(kappa, C64::new(kappa, 0.0), angle);
        let before = op_counts();
        let sol = loaded.solve(&wave.spec(), &plan)?;
        let used = op_counts().since(before);
        println!(
            "angle {angle:.1}: solve {:.4}s, e_inf {:.3e}, factorizations {}",
            sol.seconds(),
            sol.max_error(&loaded.tree, |x, y| wave.exact(x, y)),
            used.factorizations
        );
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
