//! Calibrates kernel timings on this machine and prints the optimized
//! outer/inner thread split for each stage and level.

use hps::geometry::{build_uniform_tree, Rect};
use hps::planner::{calibrate, make_plan, optimize_level, CalibrationProtocol, Stage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let budget = std::thread::available_parallelism().map_or(1, |n| n.get()).max(4);
    let tree = build_uniform_tree(Rect::unit_square(), 8, 9)?;
    let protocol = CalibrationProtocol {
        repetitions: 3,
        min_sample: std::time::Duration::from_millis(2),
        ..Default::default()
    };
    let table = calibrate(&tree, budget, &Stage::ALL, &protocol);
    let plan = make_plan(&table, &tree, budget)?;
    println!("budget {budget}\n{}", plan.describe());

    // ideal inner scaling: the split should push threads outward
    let ideal: Vec<f64> = (1..=budget).map(|j| 1.0 / j as f64).collect();
    let flat = vec![1.0; budget];
    for boxes in [1, 2, 8, 64] {
        let (p, _) = optimize_level(boxes, budget, &ideal);
        let (q, _) = optimize_level(boxes, budget, &flat);
        println!("{boxes:3} boxes: ideal inner scaling -> {p}, no inner scaling -> {q}");
    }
    Ok(())
}
