//! Builds one leaf's operators and checks the impedance map on a plane wave.

use hps::geometry::{Rect, Side};
use hps::linalg::{matvec, Workers, C64};
use hps::problem::ManufacturedSolution;
use hps::spectral::leaf_operators_for;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let wave = ManufacturedSolution::homogeneous_wave(2.0, C64::new(2.0, 0.0), 0.7);
    let spec = wave.spec();
    let rect = Rect::new(0.0, 0.5, 0.0, 0.5)?;
    let (disc, ops) = leaf_operators_for(&rect, &spec, 12, Workers::ONE)?;
    let r = ops.r.as_ref().expect("leaf keeps R until merged");
    println!(
        "n_b = {}, n_i = {}, R is {}x{}",
        disc.n_b(),
        disc.n_i(),
        r.rows(),
        r.cols()
    );

    let n_b = disc.n_b();
    let side_of = |k: usize| [Side::South, Side::East, Side::North, Side::West][k / (n_b / 4)];
    let incoming: Vec<C64> = (0..n_b)
        .map(|k| (spec.boundary_data)(disc.points[k][0], disc.points[k][1], side_of(k)))
        .collect();
    let outgoing = matvec(r, &incoming, Workers::ONE)?;
    let expected: Vec<C64> = (0..n_b)
        .map(|k| {
            let [x, y] = disc.points[k];
            let u = wave.exact(x, y);
            let [nx, ny] = side_of(k).outward_normal();
            let (kx, ky) = (2.0 * 0.7f64.cos(), 2.0 * 0.7f64.sin());
            C64::new(0.0, kx * nx + ky * ny) * u - C64::new(0.0, 2.0) * u
        })
        .collect();
    let err = outgoing
        .iter()
        .zip(&expected)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    println!("max |R t - g| on the leaf boundary: {err:.3e}");

    let u = matvec(&ops.psi, &incoming, Workers::ONE)?;
    let u_err = u
        .iter()
        .zip(&disc.points)
        .map(|(v, &[x, y])| (v - wave.exact(x, y)).norm())
        .fold(0.0, f64::max);
    println!("max |Psi t - u| on the leaf grid: {u_err:.3e}");
    Ok(())
}
