//! Dense reference solver: all leaves' collocation equations coupled through
//! impedance matching on shared edges, solved in one LU.

use std::collections::HashMap;

use crate::geometry::{build_uniform_tree, EdgePoint};
use crate::linalg::{lu_solve, CMatrix, CVector, Workers, C64, ZERO};
use crate::problem::ProblemSpec;
use crate::spectral::{build_leaf_discretization, LeafDiscretization};

use super::SolverError;

/// Largest system the oracle will assemble.
pub const MAX_UNKNOWNS: usize = 6000;

#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// Values in the tree's global numbering.
    pub u: CVector,
    /// Map from incoming to outgoing impedance data on the domain boundary,
    /// in root boundary order.
    pub root_iti: CMatrix,
}

pub fn global_direct_oracle(spec: &ProblemSpec, levels: usize, n_c: usize) -> Result<OracleSolution, SolverError> {
    spec.validate()?;
    let tree = build_uniform_tree(spec.domain, levels, n_c)?;
    let leaves: Vec<usize> = tree.leaf_ids().collect();
    let discs: Vec<LeafDiscretization> = leaves
        .iter()
        .map(|&id| {
            build_leaf_discretization(&tree.node(id).rect, spec, n_c).map_err(|source| SolverError::Leaf { id, source })
        })
        .collect::<Result<_, _>>()?;
    let n_loc = discs[0].n_total();
    let n_b = discs[0].n_b();
    let n_i = discs[0].n_i();
    let m = n_loc * leaves.len();
    if m > MAX_UNKNOWNS {
        return Err(SolverError::Mismatch(format!(
            "oracle system with {m} unknowns exceeds {MAX_UNKNOWNS}"
        )));
    }

    let mut owners: HashMap<EdgePoint, Vec<(usize, usize)>> = HashMap::new();
    for (k, &id) in leaves.iter().enumerate() {
        for (r, key) in tree.boundary_keys(id).iter().enumerate() {
            owners.entry(*key).or_default().push((k, r));
        }
    }

    let root_keys = tree.boundary_keys(1);
    let root_pos: HashMap<EdgePoint, usize> = root_keys.iter().enumerate().map(|(j, k)| (*k, j)).collect();
    let n_root = root_keys.len();
    let root_points = tree.root_boundary();

    // columns: [data, e_0, ..., e_{n_root-1}]
    let mut a = CMatrix::zeros(m, m);
    let mut rhs = CMatrix::zeros(m, 1 + n_root);
    for (k, &id) in leaves.iter().enumerate() {
        let d = &discs[k];
        let off = k * n_loc;
        for (r, key) in tree.boundary_keys(id).iter().enumerate() {
            let row = off + r;
            for c in 0..n_loc {
                a[(row, off + c)] = d.f_mat[(r, c)];
            }
            let sharers = &owners[key];
            if let Some(&j) = root_pos.get(key) {
                let p = root_points[j];
                rhs[(row, 0)] = (spec.boundary_data)(p.x, p.y, p.side);
                rhs[(row, 1 + j)] = C64::new(1.0, 0.0);
            } else {
                let &(k2, r2) = sharers
                    .iter()
                    .find(|(kk, _)| *kk != k)
                    .expect("interior edge point has a neighbour");
                let off2 = k2 * n_loc;
                for c in 0..n_loc {
                    a[(row, off2 + c)] = discs[k2].g_mat[(r2, c)];
                }
            }
        }
        let all = d.sets.all();
        for (i, &p) in d.sets.interior.iter().enumerate() {
            let row = off + n_b + i;
            for (c, &q) in all.iter().enumerate() {
                a[(row, off + c)] = C64::new(d.a_hat(p, q), 0.0);
            }
            let [x, y] = d.points[n_b + i];
            rhs[(row, 0)] = spec.body_load_at(x, y);
        }
    }
    debug_assert_eq!(n_b + n_i, n_loc);

    let sol = lu_solve(&a, &rhs, Workers::ONE)?;

    let numbering = tree.numbering();
    let mut u = vec![ZERO; numbering.len()];
    for (k, map) in numbering.leaf_maps.iter().enumerate() {
        for &p in &numbering.leaf_owned[k] {
            u[map[p]] = sol[(k * n_loc + p, 0)];
        }
    }

    // outgoing data G u at each root boundary point for unit incoming data
    let mut root_iti = CMatrix::zeros(n_root, n_root);
    for (i, key) in root_keys.iter().enumerate() {
        let &(k, r) = &owners[key][0];
        let off = k * n_loc;
        for j in 0..n_root {
            let mut g = ZERO;
            for c in 0..n_loc {
                g += discs[k].g_mat[(r, c)] * sol[(off + c, 1 + j)];
            }
            root_iti[(i, j)] = g;
        }
    }

    Ok(OracleSolution { u, root_iti })
}
