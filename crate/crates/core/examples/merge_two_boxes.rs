//! Merges the two leaves of a two-box tree and compares the parent's
//! impedance map with the dense reference solver.

use hps::geometry::{build_uniform_tree, Rect};
use hps::linalg::{Workers, C64};
use hps::merge::merge;
use hps::problem::ManufacturedSolution;
use hps::solver::oracle::global_direct_oracle;
use hps::spectral::leaf_operators_for;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ManufacturedSolution::homogeneous_wave(3.0, C64::new(3.0, 0.0), 0.2).spec();
    let n_c = 10;
    let tree = build_uniform_tree(Rect::unit_square(), 2, n_c)?;
    let (alpha, beta) = tree.node(1).children.expect("root has two children");
    let (_, a) = leaf_operators_for(&tree.node(alpha).rect, &spec, n_c, Workers::ONE)?;
    let (_, b) = leaf_operators_for(&tree.node(beta).rect, &spec, n_c, Workers::ONE)?;
    let idx = tree.interface(1).expect("root is a merge box");
    println!(
        "exterior points: {} + {}, interface points: {}",
        idx.n1(),
        idx.n2(),
        idx.n3()
    );

    let m = merge(a.r.unwrap(), b.r.unwrap(), idx, Workers::ONE)?;
    println!("interface system condition estimate: {:.3e}", m.w_condition);
    let r_root = m.r_tau.as_ref().expect("merge forms the parent map");

    let oracle = global_direct_oracle(&spec, 2, n_c)?;
    println!("max |R_root - R_dense|: {:.3e}", r_root.max_abs_diff(&oracle.root_iti));
    Ok(())
}
