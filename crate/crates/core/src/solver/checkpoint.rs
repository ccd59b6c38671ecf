//! Binary container for built operators, so one build can serve many solves.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic    8 bytes  "HPSCKPT1"
//! version  u32
//! n_c, levels                      u64, u64
//! kappa, eta.re, eta.im            f64 x 3
//! xmin, xmax, ymin, ymax           f64 x 4
//! n_boxes                          u64
//! per box, in id order:
//!   kind u8 (0 leaf, 1 merge), has_r u8
//!   leaf:  psi, y, gamma, [r]
//!   merge: phi_alpha, phi_beta, w_inv, r33_alpha, r33_beta, r13_alpha, r23_beta, [r]
//! matrix: rows u64, cols u64, then rows*cols (re f64, im f64) column-major
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::geometry::{build_uniform_tree, GeometryError, Rect};
use crate::linalg::{CMatrix, C64};
use crate::merge::MergeOperators;
use crate::planner::ThreadPlan;
use crate::spectral::LeafOperators;

use super::{BoxOps, SolverState};

pub const MAGIC: &[u8; 8] = b"HPSCKPT1";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a checkpoint file")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn put_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_matrix(w: &mut impl Write, m: &CMatrix) -> io::Result<()> {
    put_u64(w, m.rows() as u64)?;
    put_u64(w, m.cols() as u64)?;
    for v in m.as_slice() {
        put_f64(w, v.re)?;
        put_f64(w, v.im)?;
    }
    Ok(())
}

fn get_bytes<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn get_u64(r: &mut impl Read) -> io::Result<u64> {
    Ok(u64::from_le_bytes(get_bytes(r)?))
}

fn get_f64(r: &mut impl Read) -> io::Result<f64> {
    Ok(f64::from_le_bytes(get_bytes(r)?))
}

fn get_matrix(r: &mut impl Read) -> Result<CMatrix, CheckpointError> {
    let rows = get_u64(r)? as usize;
    let cols = get_u64(r)? as usize;
    let len = rows
        .checked_mul(cols)
        .filter(|&n| n <= (1 << 34))
        .ok_or_else(|| CheckpointError::Format(format!("matrix size {rows}x{cols}")))?;
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        let re = get_f64(r)?;
        let im = get_f64(r)?;
        data.push(C64::new(re, im));
    }
    Ok(CMatrix::from_col_major(rows, cols, data))
}

pub fn write_state(state: &SolverState, w: &mut impl Write) -> io::Result<()> {
    let tree = &state.tree;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    put_u64(w, tree.n_c as u64)?;
    put_u64(w, tree.levels as u64)?;
    for v in [state.kappa, state.eta.re, state.eta.im] {
        put_f64(w, v)?;
    }
    let d = tree.domain;
    for v in [d.xmin, d.xmax, d.ymin, d.ymax] {
        put_f64(w, v)?;
    }
    put_u64(w, state.ops.len() as u64)?;
    for op in &state.ops {
        match op {
            BoxOps::Leaf(l) => {
                w.write_all(&[0, l.r.is_some() as u8])?;
                for m in [&l.psi, &l.y, &l.gamma] {
                    put_matrix(w, m)?;
                }
                if let Some(r) = &l.r {
                    put_matrix(w, r)?;
                }
            }
            BoxOps::Merge(m) => {
                w.write_all(&[1, m.r_tau.is_some() as u8])?;
                for (_, a) in m.retained() {
                    put_matrix(w, a)?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_state(r: &mut impl Read) -> Result<SolverState, CheckpointError> {
    if &get_bytes::<8>(r)? != MAGIC {
        return Err(CheckpointError::Magic);
    }
    let version = u32::from_le_bytes(get_bytes(r)?);
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let n_c = get_u64(r)? as usize;
    let levels = get_u64(r)? as usize;
    let kappa = get_f64(r)?;
    let eta = C64::new(get_f64(r)?, get_f64(r)?);
    let domain = Rect::new(get_f64(r)?, get_f64(r)?, get_f64(r)?, get_f64(r)?)?;
    let tree = build_uniform_tree(domain, levels, n_c)?;
    let n_boxes = get_u64(r)? as usize;
    if n_boxes != tree.n_boxes() {
        return Err(CheckpointError::Format(format!(
            "{n_boxes} boxes for a tree of {}",
            tree.n_boxes()
        )));
    }
    let mut ops = Vec::with_capacity(n_boxes);
    for id in 1..=n_boxes {
        let [kind, has_r] = get_bytes::<2>(r)?;
        let leaf = tree.node(id).is_leaf();
        let op = match (kind, leaf) {
            (0, true) => {
                let psi = get_matrix(r)?;
                let y = get_matrix(r)?;
                let gamma = get_matrix(r)?;
                let r_mat = if has_r == 1 { Some(get_matrix(r)?) } else { None };
                BoxOps::Leaf(LeafOperators {
                    r: r_mat,
                    psi,
                    y,
                    gamma,
                })
            }
            (1, false) => {
                let mut mats: Vec<CMatrix> = (0..7).map(|_| get_matrix(r)).collect::<Result<_, _>>()?;
                let r_tau = if has_r == 1 { Some(get_matrix(r)?) } else { None };
                let mut next = || mats.remove(0);
                BoxOps::Merge(MergeOperators {
                    phi_alpha: next(),
                    phi_beta: next(),
                    w_inv: next(),
                    r33_alpha: next(),
                    r33_beta: next(),
                    r13_alpha: next(),
                    r23_beta: next(),
                    r_tau,
                    w_condition: f64::NAN,
                })
            }
            _ => {
                return Err(CheckpointError::Format(format!(
                    "box {id}: unexpected block kind {kind}"
                )))
            }
        };
        ops.push(op);
    }
    Ok(SolverState {
        tree,
        kappa,
        eta,
        ops,
        plan: ThreadPlan::serial(levels),
        timings: Vec::new(),
    })
}

pub fn save(state: &SolverState, path: &Path) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_state(state, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<SolverState, CheckpointError> {
    read_state(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ManufacturedSolution;
    use crate::solver::build;

    #[test]
    fn round_trip_preserves_solution() {
        let m = ManufacturedSolution::gaussian_benchmark(1.5);
        let spec = m.spec();
        let plan = ThreadPlan::serial(3);
        let state = build(&spec, 3, 8, &plan).unwrap();
        let mut buf = Vec::new();
        write_state(&state, &mut buf).unwrap();
        let back = read_state(&mut buf.as_slice()).unwrap();
        assert_eq!(back.ops.len(), state.ops.len());
        assert_eq!(back.root_r(), state.root_r());
        assert_eq!(back.retained_child_r_count(), 0);
        let a = state.solve(&spec, &plan).unwrap();
        let b = back.solve(&spec, &plan).unwrap();
        assert_eq!(a.u, b.u);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            read_state(&mut &b"NOTACKPT...."[..]),
            Err(CheckpointError::Magic)
        ));
        let mut bad = MAGIC.to_vec();
        bad.extend(7u32.to_le_bytes());
        assert!(matches!(
            read_state(&mut bad.as_slice()),
            Err(CheckpointError::Version(7))
        ));
        let spec = ManufacturedSolution::gaussian_benchmark(1.0).spec();
        let state = build(&spec, 2, 6, &ThreadPlan::serial(2)).unwrap();
        let mut buf = Vec::new();
        write_state(&state, &mut buf).unwrap();
        buf.truncate(buf.len() - 5);
        assert!(matches!(read_state(&mut buf.as_slice()), Err(CheckpointError::Io(_))));
    }
}
