//! Two-box merge of impedance-to-impedance operators.
//!
//! Children are `α` and `β`; their boundary points split into `I_1` (α only),
//! `I_2` (β only) and the shared interface `I_3`. Only the matrices needed to
//! apply the interface and flux operators as matvecs are kept.

use thiserror::Error;

use crate::geometry::InterfaceSets;
use crate::linalg::{gemm, gemm_acc, lu_invert, matvec, matvec_acc, CMatrix, CVector, LinalgError, Workers, C64, ONE};

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("interface matrix W is singular at pivot {pivot} (condition estimate {cond_estimate:.3e})")]
    SingularInterface { pivot: usize, cond_estimate: f64 },
    #[error("child operator is {rows}x{cols}, index sets need a square matrix of side {expected}")]
    Shape { rows: usize, cols: usize, expected: usize },
    #[error("interface vectors have lengths {alpha} and {beta}, expected {expected}")]
    Length { alpha: usize, beta: usize, expected: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone)]
pub struct MergeOperators {
    pub phi_alpha: CMatrix,
    pub phi_beta: CMatrix,
    pub w_inv: CMatrix,
    pub r33_alpha: CMatrix,
    pub r33_beta: CMatrix,
    pub r13_alpha: CMatrix,
    pub r23_beta: CMatrix,
    /// Taken by the parent merge; only the root keeps it.
    pub r_tau: Option<CMatrix>,
    /// `‖W‖₁ ‖W⁻¹‖₁`.
    pub w_condition: f64,
}

impl MergeOperators {
    pub fn n1(&self) -> usize {
        self.r13_alpha.rows()
    }

    pub fn n2(&self) -> usize {
        self.r23_beta.rows()
    }

    pub fn n3(&self) -> usize {
        self.w_inv.rows()
    }

    /// Retained matrices by name, `r_tau` included only while present.
    pub fn retained(&self) -> Vec<(&'static str, &CMatrix)> {
        let mut v = vec![
            ("phi_alpha", &self.phi_alpha),
            ("phi_beta", &self.phi_beta),
            ("w_inv", &self.w_inv),
            ("r33_alpha", &self.r33_alpha),
            ("r33_beta", &self.r33_beta),
            ("r13_alpha", &self.r13_alpha),
            ("r23_beta", &self.r23_beta),
        ];
        if let Some(r) = &self.r_tau {
            v.push(("r_tau", r));
        }
        v
    }
}

fn one_norm(a: &CMatrix) -> f64 {
    (0..a.cols())
        .map(|j| a.col(j).iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn check_square(r: &CMatrix, expected: usize) -> Result<(), MergeError> {
    if r.rows() != expected || r.cols() != expected {
        return Err(MergeError::Shape {
            rows: r.rows(),
            cols: r.cols(),
            expected,
        });
    }
    Ok(())
}

/// Merges two children's operators. Both `R` matrices are consumed.
pub fn merge(
    r_alpha: CMatrix,
    r_beta: CMatrix,
    idx: &InterfaceSets,
    workers: Workers,
) -> Result<MergeOperators, MergeError> {
    check_square(&r_alpha, idx.n1() + idx.n3())?;
    check_square(&r_beta, idx.n2() + idx.n3())?;
    let (i1, i2, i3a, i3b) = (&idx.i1, &idx.i2, &idx.i3_alpha, &idx.i3_beta);
    let (n1, n2, n3) = (idx.n1(), idx.n2(), idx.n3());

    let r11_alpha = r_alpha.select(i1, i1);
    let r13_alpha = r_alpha.select(i1, i3a);
    let r31_alpha = r_alpha.select(i3a, i1);
    let r33_alpha = r_alpha.select(i3a, i3a);
    drop(r_alpha);
    let r22_beta = r_beta.select(i2, i2);
    let r23_beta = r_beta.select(i2, i3b);
    let r32_beta = r_beta.select(i3b, i2);
    let r33_beta = r_beta.select(i3b, i3b);
    drop(r_beta);

    let mut w = CMatrix::identity(n3);
    gemm_acc(&mut w, -ONE, &r33_beta, &r33_alpha, workers, true)?;
    let w_inv = match lu_invert(&w, workers) {
        Ok(m) => m,
        Err(LinalgError::Singular {
            pivot,
            magnitude,
            scale,
        }) => {
            return Err(MergeError::SingularInterface {
                pivot,
                cond_estimate: scale / magnitude.max(f64::MIN_POSITIVE),
            })
        }
        Err(e) => return Err(e.into()),
    };
    let w_condition = one_norm(&w) * one_norm(&w_inv);
    log::debug!("merge n3={n3} cond(W)~{w_condition:.3e}");

    // Φα = W⁻¹ [R33β R31α | -R32β]
    let mut rhs = CMatrix::zeros(n3, n1 + n2);
    {
        let t = gemm(&r33_beta, &r31_alpha, workers)?;
        for j in 0..n1 {
            rhs.col_mut(j).copy_from_slice(t.col(j));
        }
        for j in 0..n2 {
            for (d, s) in rhs.col_mut(n1 + j).iter_mut().zip(r32_beta.col(j)) {
                *d = -s;
            }
        }
    }
    let phi_alpha = gemm(&w_inv, &rhs, workers)?;
    drop(rhs);

    // Φβ = [-R31α | 0] - R33α Φα
    let mut phi_beta = CMatrix::zeros(n3, n1 + n2);
    for j in 0..n1 {
        for (d, s) in phi_beta.col_mut(j).iter_mut().zip(r31_alpha.col(j)) {
            *d = -s;
        }
    }
    gemm_acc(&mut phi_beta, -ONE, &r33_alpha, &phi_alpha, workers, true)?;

    // Rτ = blockdiag(R11α, R22β) + [R13α Φα ; R23β Φβ]
    let n_ext = n1 + n2;
    let top = {
        let mut m = CMatrix::zeros(n1, n_ext);
        for j in 0..n1 {
            m.col_mut(j).copy_from_slice(r11_alpha.col(j));
        }
        gemm_acc(&mut m, ONE, &r13_alpha, &phi_alpha, workers, true)?;
        m
    };
    let bottom = {
        let mut m = CMatrix::zeros(n2, n_ext);
        for j in 0..n2 {
            m.col_mut(n1 + j).copy_from_slice(r22_beta.col(j));
        }
        gemm_acc(&mut m, ONE, &r23_beta, &phi_beta, workers, true)?;
        m
    };
    let r_tau = CMatrix::vstack(&top, &bottom);

    Ok(MergeOperators {
        phi_alpha,
        phi_beta,
        w_inv,
        r33_alpha,
        r33_beta,
        r13_alpha,
        r23_beta,
        r_tau: Some(r_tau),
        w_condition,
    })
}

fn check_lengths(m: &MergeOperators, a: &[C64], b: &[C64]) -> Result<(), MergeError> {
    if a.len() != m.n3() || b.len() != m.n3() {
        return Err(MergeError::Length {
            alpha: a.len(),
            beta: b.len(),
            expected: m.n3(),
        });
    }
    Ok(())
}

/// Interface corrections from the children's particular outgoing data on
/// the shared edge: `t̃α = W⁻¹(R33β hα - hβ)`, `t̃β = -(hα + R33α t̃α)`.
pub fn apply_upsilon(
    m: &MergeOperators,
    h_alpha3: &[C64],
    h_beta3: &[C64],
    workers: Workers,
) -> Result<(CVector, CVector), MergeError> {
    check_lengths(m, h_alpha3, h_beta3)?;
    let mut tmp = matvec(&m.r33_beta, h_alpha3, workers)?;
    for (t, h) in tmp.iter_mut().zip(h_beta3) {
        *t -= h;
    }
    let t_alpha = matvec(&m.w_inv, &tmp, workers)?;
    let mut t_beta = h_alpha3.to_vec();
    matvec_acc(&mut t_beta, &m.r33_alpha, &t_alpha, workers, true)?;
    for v in t_beta.iter_mut() {
        *v = -*v;
    }
    Ok((t_alpha, t_beta))
}

/// `[R13α t̃α ; R23β t̃β]` from precomputed interface corrections.
pub fn gamma_from_corrections(
    m: &MergeOperators,
    t_alpha3: &[C64],
    t_beta3: &[C64],
    workers: Workers,
) -> Result<CVector, MergeError> {
    check_lengths(m, t_alpha3, t_beta3)?;
    let mut out = matvec(&m.r13_alpha, t_alpha3, workers)?;
    out.extend(matvec(&m.r23_beta, t_beta3, workers)?);
    Ok(out)
}

/// The parent's flux operator applied to `[hα3; hβ3]`.
pub fn apply_gamma_tau(
    m: &MergeOperators,
    h_alpha3: &[C64],
    h_beta3: &[C64],
    workers: Workers,
) -> Result<CVector, MergeError> {
    let (ta, tb) = apply_upsilon(m, h_alpha3, h_beta3, workers)?;
    gamma_from_corrections(m, &ta, &tb, workers)
}

/// Explicitly assembled operators, for checking the matvec actions.
pub mod explicit {
    use super::*;

    /// `Υα = [W⁻¹R33β | -W⁻¹]`, `Υβ = [-(I + R33α W⁻¹ R33β) | R33α W⁻¹]`.
    pub fn upsilon(m: &MergeOperators) -> Result<(CMatrix, CMatrix), MergeError> {
        let w = Workers::ONE;
        let n3 = m.n3();
        let winv_r33b = gemm(&m.w_inv, &m.r33_beta, w)?;
        let mut neg_winv = m.w_inv.clone();
        neg_winv.scale(-ONE);
        let ups_alpha = CMatrix::hstack(&winv_r33b, &neg_winv);

        let mut left = CMatrix::identity(n3);
        gemm_acc(&mut left, ONE, &m.r33_alpha, &winv_r33b, w, true)?;
        left.scale(-ONE);
        let right = gemm(&m.r33_alpha, &m.w_inv, w)?;
        let ups_beta = CMatrix::hstack(&left, &right);
        Ok((ups_alpha, ups_beta))
    }

    /// `Γτ = [R13α 0; 0 R23β] [Υα; Υβ]`.
    pub fn gamma_tau(m: &MergeOperators) -> Result<CMatrix, MergeError> {
        let (ua, ub) = upsilon(m)?;
        let (n1, n2, n3) = (m.n1(), m.n2(), m.n3());
        let mut diag = CMatrix::zeros(n1 + n2, 2 * n3);
        for j in 0..n3 {
            for i in 0..n1 {
                diag[(i, j)] = m.r13_alpha[(i, j)];
            }
            for i in 0..n2 {
                diag[(n1 + i, n3 + j)] = m.r23_beta[(i, j)];
            }
        }
        Ok(gemm(&diag, &CMatrix::vstack(&ua, &ub), Workers::ONE)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_uniform_tree, BoxTree, Rect};
    use crate::linalg::ZERO;
    use crate::problem::ProblemSpec;
    use crate::spectral::leaf_operators_for;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> CVector {
        (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn leaf_r(tree: &BoxTree, spec: &ProblemSpec, id: usize) -> CMatrix {
        let (_, ops) = leaf_operators_for(&tree.node(id).rect, spec, tree.n_c, Workers::ONE).unwrap();
        ops.r.unwrap()
    }

    fn two_leaf() -> (BoxTree, ProblemSpec, MergeOperators, CMatrix, CMatrix) {
        let tree = build_uniform_tree(Rect::unit_square(), 2, 8).unwrap();
        let spec = ProblemSpec::new(Rect::unit_square(), 2.0).with_coefficient(|x, y| 1.0 + 0.2 * x * y);
        let ra = leaf_r(&tree, &spec, 2);
        let rb = leaf_r(&tree, &spec, 3);
        let m = merge(ra.clone(), rb.clone(), tree.interface(1).unwrap(), Workers::ONE).unwrap();
        (tree, spec, m, ra, rb)
    }

    #[test]
    fn decoupled_interface() {
        let idx = InterfaceSets {
            i1: vec![0, 1],
            i2: vec![0],
            i3_alpha: vec![2],
            i3_beta: vec![1],
        };
        let ra = CMatrix::from_fn(3, 3, |i, j| {
            if i == 2 && j == 2 {
                ZERO
            } else {
                C64::new((i * 3 + j) as f64 + 1.0, 0.5)
            }
        });
        let rb = CMatrix::from_fn(2, 2, |i, j| {
            if i == 1 && j == 1 {
                ZERO
            } else {
                C64::new(-((i * 2 + j) as f64) - 1.0, 0.0)
            }
        });
        let m = merge(ra.clone(), rb.clone(), &idx, Workers::ONE).unwrap();
        assert_eq!(m.w_inv, CMatrix::identity(1));
        // Φα = [0 | -R32β], Φβ = [-R31α | 0]
        assert_eq!(m.phi_alpha[(0, 0)], ZERO);
        assert_eq!(m.phi_alpha[(0, 1)], ZERO);
        assert_eq!(m.phi_alpha[(0, 2)], -rb[(1, 0)]);
        assert_eq!(m.phi_beta[(0, 0)], -ra[(2, 0)]);
        assert_eq!(m.phi_beta[(0, 1)], -ra[(2, 1)]);
        assert_eq!(m.phi_beta[(0, 2)], ZERO);
        let r = m.r_tau.as_ref().unwrap();
        // blockdiag plus coupling through the interface rows
        for i in 0..2 {
            for j in 0..2 {
                let expect = ra[(i, j)] + ra[(i, 2)] * m.phi_alpha[(0, j)];
                assert!((r[(i, j)] - expect).norm() < 1e-14);
            }
        }
        let h = [C64::new(1.0, 2.0)];
        let g = [C64::new(-3.0, 0.5)];
        let (ta, tb) = apply_upsilon(&m, &h, &g, Workers::ONE).unwrap();
        assert_eq!(ta[0], -g[0]);
        assert_eq!(tb[0], -h[0]);
    }

    #[test]
    fn interface_relations_hold() {
        // given exterior incoming data, the reconstructed interface data
        // satisfies both children's relations with opposite normals
        let (_, _, m, ra, rb) = two_leaf();
        let tree = build_uniform_tree(Rect::unit_square(), 2, 8).unwrap();
        let idx = tree.interface(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t_ext = rand_vec(&mut rng, idx.exterior());
        let w = Workers::ONE;
        let t3a = matvec(&m.phi_alpha, &t_ext, w).unwrap();
        let t3b = matvec(&m.phi_beta, &t_ext, w).unwrap();
        let mut ta = vec![ZERO; ra.rows()];
        for (k, &p) in idx.i1.iter().enumerate() {
            ta[p] = t_ext[k];
        }
        for (k, &p) in idx.i3_alpha.iter().enumerate() {
            ta[p] = t3a[k];
        }
        let mut tb = vec![ZERO; rb.rows()];
        for (k, &p) in idx.i2.iter().enumerate() {
            tb[p] = t_ext[idx.n1() + k];
        }
        for (k, &p) in idx.i3_beta.iter().enumerate() {
            tb[p] = t3b[k];
        }
        let ga = matvec(&ra, &ta, w).unwrap();
        let gb = matvec(&rb, &tb, w).unwrap();
        let scale = t_ext.iter().fold(1.0_f64, |s, v| s.max(v.norm()));
        for k in 0..idx.n3() {
            assert!((t3a[k] + gb[idx.i3_beta[k]]).norm() <= 1e-11 * scale);
            assert!((ga[idx.i3_alpha[k]] + t3b[k]).norm() <= 1e-11 * scale);
        }
        // parent's outgoing data equals the children's exterior outgoing data
        let g_tau = matvec(m.r_tau.as_ref().unwrap(), &t_ext, w).unwrap();
        for (k, &p) in idx.i1.iter().enumerate() {
            assert!((g_tau[k] - ga[p]).norm() <= 1e-11 * scale);
        }
        for (k, &p) in idx.i2.iter().enumerate() {
            assert!((g_tau[idx.n1() + k] - gb[p]).norm() <= 1e-11 * scale);
        }
    }

    #[test]
    fn actions_match_explicit_operators() {
        let (_, _, m, _, _) = two_leaf();
        let (ua, ub) = explicit::upsilon(&m).unwrap();
        let gt = explicit::gamma_tau(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n3 = m.n3();
        let ha = rand_vec(&mut rng, n3);
        let hb = rand_vec(&mut rng, n3);
        let stacked: CVector = ha.iter().chain(&hb).copied().collect();
        let w = Workers::ONE;
        let (ta, tb) = apply_upsilon(&m, &ha, &hb, w).unwrap();
        let ea = matvec(&ua, &stacked, w).unwrap();
        let eb = matvec(&ub, &stacked, w).unwrap();
        let g = apply_gamma_tau(&m, &ha, &hb, w).unwrap();
        let eg = matvec(&gt, &stacked, w).unwrap();
        let diff = |a: &[C64], b: &[C64]| a.iter().zip(b).fold(0.0_f64, |s, (x, y)| s.max((x - y).norm()));
        assert!(diff(&ta, &ea) <= 1e-12);
        assert!(diff(&tb, &eb) <= 1e-12);
        assert!(diff(&g, &eg) <= 1e-12);
    }

    #[test]
    fn zero_inputs_give_zero() {
        let (_, _, m, _, _) = two_leaf();
        let z = vec![ZERO; m.n3()];
        let (ta, tb) = apply_upsilon(&m, &z, &z, Workers::ONE).unwrap();
        assert!(ta.iter().chain(&tb).all(|v| *v == ZERO));
        assert!(apply_gamma_tau(&m, &z, &z, Workers::ONE)
            .unwrap()
            .iter()
            .all(|v| *v == ZERO));
        assert!(apply_upsilon(&m, &z[1..], &z, Workers::ONE).is_err());
    }

    #[test]
    fn w_times_inverse_is_identity() {
        let (_, _, m, _, _) = two_leaf();
        let mut w = CMatrix::identity(m.n3());
        gemm_acc(&mut w, -ONE, &m.r33_beta, &m.r33_alpha, Workers::ONE, true).unwrap();
        let prod = gemm(&w, &m.w_inv, Workers::ONE).unwrap();
        assert!(prod.max_abs_diff(&CMatrix::identity(m.n3())) <= 1e-10);
        assert!(m.w_condition >= 1.0);
        assert_eq!(m.retained().len(), 8);
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let (tree, spec, _, ra, _) = two_leaf();
        let _ = spec;
        let bad = CMatrix::zeros(3, 3);
        assert!(matches!(
            merge(ra, bad, tree.interface(1).unwrap(), Workers::ONE),
            Err(MergeError::Shape { .. })
        ));
    }

    /// Maps each boundary point of one merged box to the index of its mirror
    /// image `(x, y) -> (y, x)` in the other.
    fn transpose_permutation(a: &[[f64; 2]], b: &[[f64; 2]]) -> Vec<usize> {
        a.iter()
            .map(|&[x, y]| {
                b.iter()
                    .position(|&[bx, by]| (bx - y).abs() < 1e-12 && (by - x).abs() < 1e-12)
                    .expect("mirror point")
            })
            .collect()
    }

    fn merged_boundary_coords(tree: &BoxTree, id: usize) -> Vec<[f64; 2]> {
        tree.boundary_keys(id).iter().map(|k| tree.point_coords(k)).collect()
    }

    #[test]
    fn horizontal_merge_is_transposed_vertical_merge() {
        let spec = |d: Rect| ProblemSpec::new(d, 1.5);
        // vertical merge: root of a 2-leaf tree on [0,2]x[0,1]
        let dv = Rect::new(0.0, 2.0, 0.0, 1.0).unwrap();
        let tv = build_uniform_tree(dv, 2, 6).unwrap();
        let mv = merge(
            leaf_r(&tv, &spec(dv), 2),
            leaf_r(&tv, &spec(dv), 3),
            tv.interface(1).unwrap(),
            Workers::ONE,
        )
        .unwrap();
        // horizontal merge: box 2 of a 3-level tree on [0,2]x[0,2]
        let dh = Rect::new(0.0, 2.0, 0.0, 2.0).unwrap();
        let th = build_uniform_tree(dh, 3, 6).unwrap();
        let mh = merge(
            leaf_r(&th, &spec(dh), 4),
            leaf_r(&th, &spec(dh), 5),
            th.interface(2).unwrap(),
            Workers::ONE,
        )
        .unwrap();
        let perm = transpose_permutation(&merged_boundary_coords(&th, 2), &merged_boundary_coords(&tv, 1));
        let rv = mv.r_tau.unwrap();
        let rh = mh.r_tau.unwrap();
        let mut diff = 0.0_f64;
        for i in 0..perm.len() {
            for j in 0..perm.len() {
                diff = diff.max((rh[(i, j)] - rv[(perm[i], perm[j])]).norm());
            }
        }
        assert!(diff <= 1e-10 * rv.max_abs(), "diff {diff}");
    }
}
