//! Error against the manufactured solution as the tree deepens, for three
//! leaf orders.

use hps::harness::{run_convergence, Command, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (n_c, levels) in [(6, (6, 10)), (9, (5, 9)), (16, (3, 7))] {
        let mut cfg = RunConfig::new(Command::Convergence);
        cfg.kappa = 8.0;
        cfg.n_c = n_c;
        cfg.levels = levels;
        println!("n_c = {n_c}");
        for r in run_convergence(&cfg)? {
            println!(
                "  L = {:2}  N = {:7}  e_inf = {:.3e}  build {:.3}s  solve {:.4}s",
                r.levels,
                r.n_points,
                r.e_inf.unwrap_or(f64::NAN),
                r.build_seconds,
                r.solve_seconds
            );
        }
    }
    Ok(())
}
