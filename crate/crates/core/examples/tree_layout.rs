//! Prints a small box tree and the interface sizes at each merge level.

use hps::geometry::{build_uniform_tree, Rect};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tree = build_uniform_tree(Rect::new(0.0, 2.0, 0.0, 1.0)?, 4, 6)?;
    print!("{}", tree.describe());
    println!("{} leaves, {} points", tree.n_leaves(), tree.n_points());
    for level in 0..tree.leaf_level() {
        let id = tree.level_range(level).start;
        let s = tree.interface(id).expect("merge box");
        println!(
            "level {level}: {} boxes, exterior {} interface {}",
            tree.boxes_on_level(level),
            s.exterior(),
            s.n3()
        );
    }
    Ok(())
}
