//! Chebyshev collocation on a single leaf and the leaf operator factory.

use std::f64::consts::PI;

use thiserror::Error;

use crate::geometry::{leaf_index_sets, GeometryError, LeafIndexSets, Rect};
use crate::linalg::{gemm, lu_invert, CMatrix, LinalgError, Workers, C64, ZERO};
use crate::problem::ProblemSpec;

#[derive(Debug, Error)]
pub enum LeafError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("leaf system matrix is singular (possible interior resonance): {0}")]
    SingularLeaf(#[source] LinalgError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("coefficient is not finite at ({x}, {y})")]
    Coefficient { x: f64, y: f64 },
}

/// Chebyshev extreme points mapped to `[a, b]`, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebGrid1D {
    pub a: f64,
    pub b: f64,
    pub nodes: Vec<f64>,
}

impl ChebGrid1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `n ≥ 2` nodes on `[a, b]`. Uses the `sin` form so symmetric pairs are
/// exact negatives on `[-1, 1]`.
pub fn cheb_nodes(n: usize, a: f64, b: f64) -> ChebGrid1D {
    assert!(n >= 2, "need at least two Chebyshev nodes");
    let m = (n - 1) as f64;
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut nodes: Vec<f64> = (0..n)
        .map(|k| {
            let t = (PI * (2.0 * k as f64 - m) / (2.0 * m)).sin();
            mid + half * t
        })
        .collect();
    nodes[0] = a;
    nodes[n - 1] = b;
    ChebGrid1D { a, b, nodes }
}

/// Dense real `n x n` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffMatrix {
    pub n: usize,
    data: Vec<f64>,
}

impl DiffMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(d, x)| d * x).sum())
            .collect()
    }

    pub fn squared(&self) -> DiffMatrix {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let d = self.get(i, k);
                for j in 0..n {
                    data[i * n + j] += d * self.get(k, j);
                }
            }
        }
        DiffMatrix { n, data }
    }
}

/// First-derivative matrix on the grid, barycentric form with the
/// negative-sum diagonal.
pub fn cheb_diff(grid: &ChebGrid1D) -> DiffMatrix {
    let n = grid.len();
    assert!(n >= 2, "need at least two Chebyshev nodes");
    let x = &grid.nodes;
    let w: Vec<f64> = (0..n)
        .map(|j| {
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n - 1 {
                0.5 * s
            } else {
                s
            }
        })
        .collect();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let d = (w[j] / w[i]) / (x[i] - x[j]);
                data[i * n + j] = d;
                diag -= d;
            }
        }
        data[i * n + i] = diag;
    }
    DiffMatrix { n, data }
}

/// Collocation data of one leaf; local points are ordered `[I_b, I_i]`.
#[derive(Debug, Clone)]
pub struct LeafDiscretization {
    pub n_c: usize,
    pub rect: Rect,
    pub sets: LeafIndexSets,
    pub x: ChebGrid1D,
    pub y: ChebGrid1D,
    pub dx: DiffMatrix,
    pub dy: DiffMatrix,
    /// Coordinates of the local points in `[I_b, I_i]` order.
    pub points: Vec<[f64; 2]>,
    /// `κ² c` on the full tensor grid.
    pub potential: Vec<f64>,
    pub n_mat: CMatrix,
    pub f_mat: CMatrix,
    pub g_mat: CMatrix,
    pub b_mat: CMatrix,
    dxx: DiffMatrix,
    dyy: DiffMatrix,
}

impl LeafDiscretization {
    /// Entry of `Â = -D_x² - D_y² - C` between full-grid indices.
    pub fn a_hat(&self, p: usize, q: usize) -> f64 {
        let n = self.n_c;
        let (px, py) = (p % n, p / n);
        let (qx, qy) = (q % n, q / n);
        let mut v = 0.0;
        if py == qy {
            v -= self.dxx.get(px, qx);
        }
        if px == qx {
            v -= self.dyy.get(py, qy);
        }
        if p == q {
            v -= self.potential[p];
        }
        v
    }

    /// `Â(I_i, I^τ)` applied to a local vector, i.e. the PDE operator at
    /// interior points.
    pub fn apply_interior(&self, u_local: &[C64]) -> Vec<C64> {
        let all = self.sets.all();
        self.sets
            .interior
            .iter()
            .map(|&p| all.iter().zip(u_local).map(|(&q, &u)| u * self.a_hat(p, q)).sum())
            .collect()
    }

    pub fn n_b(&self) -> usize {
        self.sets.n_b()
    }

    pub fn n_i(&self) -> usize {
        self.sets.n_i()
    }

    pub fn n_total(&self) -> usize {
        self.sets.n_total()
    }
}

/// Full-grid derivative row `(D_axis)(p, ·)` scattered onto local columns.
#[allow(clippy::too_many_arguments)]
fn derivative_row(
    n: usize,
    d: &DiffMatrix,
    along_x: bool,
    p: usize,
    local_of: &[Option<usize>],
    sign: f64,
    out: &mut CMatrix,
    row: usize,
) {
    let (px, py) = (p % n, p / n);
    for k in 0..n {
        let q = if along_x { k + n * py } else { px + n * k };
        let coef = if along_x { d.get(px, k) } else { d.get(py, k) };
        if let Some(c) = local_of[q] {
            out[(row, c)] += C64::new(sign * coef, 0.0);
        }
    }
}

pub fn build_leaf_discretization(rect: &Rect, spec: &ProblemSpec, n_c: usize) -> Result<LeafDiscretization, LeafError> {
    let potential = sample_potential(rect, spec, n_c)?;
    discretize_with_potential(rect, spec.eta, n_c, potential)
}

/// `κ² c` on the leaf's full tensor grid, index `ix + n_c·iy`.
pub fn sample_potential(rect: &Rect, spec: &ProblemSpec, n_c: usize) -> Result<Vec<f64>, LeafError> {
    let kappa2 = spec.kappa * spec.kappa;
    let mut potential = vec![0.0; n_c * n_c];
    if kappa2 == 0.0 {
        return Ok(potential);
    }
    let x = cheb_nodes(n_c, rect.xmin, rect.xmax);
    let y = cheb_nodes(n_c, rect.ymin, rect.ymax);
    for iy in 0..n_c {
        for ix in 0..n_c {
            let (px, py) = (x.nodes[ix], y.nodes[iy]);
            let c = (spec.coefficient)(px, py);
            if !c.is_finite() {
                return Err(LeafError::Coefficient { x: px, y: py });
            }
            potential[ix + n_c * iy] = kappa2 * c;
        }
    }
    Ok(potential)
}

/// Leaf discretization from pre-sampled `κ² c` values.
pub fn discretize_with_potential(
    rect: &Rect,
    eta: C64,
    n_c: usize,
    potential: Vec<f64>,
) -> Result<LeafDiscretization, LeafError> {
    let sets = leaf_index_sets(n_c)?;
    assert_eq!(potential.len(), n_c * n_c, "one potential sample per grid point");
    let x = cheb_nodes(n_c, rect.xmin, rect.xmax);
    let y = cheb_nodes(n_c, rect.ymin, rect.ymax);
    let dx = cheb_diff(&x);
    let dy = cheb_diff(&y);
    let dxx = dx.squared();
    let dyy = dy.squared();

    let all = sets.all();
    let n_b = sets.n_b();
    let n_tot = all.len();
    let mut local_of = vec![None; n_c * n_c];
    for (c, &p) in all.iter().enumerate() {
        local_of[p] = Some(c);
    }
    let points: Vec<[f64; 2]> = all.iter().map(|&p| [x.nodes[p % n_c], y.nodes[p / n_c]]).collect();

    let mut n_mat = CMatrix::zeros(n_b, n_tot);
    let sides: [(&[usize], bool, f64); 4] = [
        (&sets.south, false, -1.0),
        (&sets.east, true, 1.0),
        (&sets.north, false, 1.0),
        (&sets.west, true, -1.0),
    ];
    let mut row = 0;
    for (idx, along_x, sign) in sides {
        let d = if along_x { &dx } else { &dy };
        for &p in idx {
            derivative_row(n_c, d, along_x, p, &local_of, sign, &mut n_mat, row);
            row += 1;
        }
    }

    let i_eta = C64::new(0.0, 1.0) * eta;
    let mut f_mat = n_mat.clone();
    let mut g_mat = n_mat.clone();
    for r in 0..n_b {
        f_mat[(r, r)] += i_eta;
        g_mat[(r, r)] -= i_eta;
    }

    let mut disc = LeafDiscretization {
        n_c,
        rect: *rect,
        sets,
        x,
        y,
        dx,
        dy,
        points,
        potential,
        n_mat,
        f_mat,
        g_mat,
        b_mat: CMatrix::zeros(0, 0),
        dxx,
        dyy,
    };
    let mut b_mat = CMatrix::zeros(n_tot, n_tot);
    for c in 0..n_tot {
        for r in 0..n_b {
            b_mat[(r, c)] = disc.f_mat[(r, c)];
        }
    }
    for (k, &p) in disc.sets.interior.iter().enumerate() {
        for (c, &q) in all.iter().enumerate() {
            let v = disc.a_hat(p, q);
            if v != 0.0 {
                b_mat[(n_b + k, c)] = C64::new(v, 0.0);
            }
        }
    }
    disc.b_mat = b_mat;
    Ok(disc)
}

/// Dense leaf operators. `r` is taken by the parent merge and is `None`
/// afterwards for every non-root leaf.
#[derive(Debug, Clone)]
pub struct LeafOperators {
    pub r: Option<CMatrix>,
    pub psi: CMatrix,
    pub y: CMatrix,
    pub gamma: CMatrix,
}

/// Ψ and Y are column blocks of `B⁻¹`; `R = GΨ`, `Γ = GY` come from one
/// product `G B⁻¹`.
pub fn build_leaf_operators(disc: &LeafDiscretization, workers: Workers) -> Result<LeafOperators, LeafError> {
    let binv = lu_invert(&disc.b_mat, workers).map_err(|e| match e {
        LinalgError::Singular { .. } => LeafError::SingularLeaf(e),
        other => LeafError::Linalg(other),
    })?;
    let gb = gemm(&disc.g_mat, &binv, workers)?;
    let n_b = disc.n_b();
    let n_tot = disc.n_total();
    Ok(LeafOperators {
        r: Some(gb.col_block(0, n_b)),
        psi: binv.col_block(0, n_b),
        y: binv.col_block(n_b, n_tot),
        gamma: gb.col_block(n_b, n_tot),
    })
}

/// Convenience: leaf discretization plus operators.
pub fn leaf_operators_for(
    rect: &Rect,
    spec: &ProblemSpec,
    n_c: usize,
    workers: Workers,
) -> Result<(LeafDiscretization, LeafOperators), LeafError> {
    let disc = build_leaf_discretization(rect, spec, n_c)?;
    let ops = build_leaf_operators(&disc, workers)?;
    Ok((disc, ops))
}

/// Interior body-load samples in `I_i` order.
pub fn sample_body_load(disc: &LeafDiscretization, spec: &ProblemSpec) -> Vec<C64> {
    if spec.body_load.is_none() {
        return vec![ZERO; disc.n_i()];
    }
    disc.points[disc.n_b()..]
        .iter()
        .map(|&[x, y]| spec.body_load_at(x, y))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Side;
    use crate::linalg::{matvec, CVector, ONE};
    use crate::problem::ManufacturedSolution;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn nodes_small_cases() {
        assert_eq!(cheb_nodes(3, -1.0, 1.0).nodes, vec![-1.0, 0.0, 1.0]);
        assert_eq!(cheb_nodes(2, 0.0, 2.0).nodes, vec![0.0, 2.0]);
        let g = cheb_nodes(9, -1.0, 1.0);
        for k in 0..9 {
            assert_eq!(g.nodes[k], -g.nodes[8 - k]);
        }
        assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn diff_constant_and_linear() {
        let g = cheb_nodes(8, -1.0, 1.0);
        let d = cheb_diff(&g);
        let ones = vec![1.0; 8];
        assert!(d.apply(&ones).iter().all(|v| v.abs() <= 1e-13));
        let dx = d.apply(&g.nodes);
        assert!(max_err(&dx, &ones) <= 1e-12);
    }

    #[test]
    fn diff_cubic_on_unit_interval() {
        let g = cheb_nodes(10, 0.0, 1.0);
        let d = cheb_diff(&g);
        let f: Vec<f64> = g.nodes.iter().map(|x| x.powi(3)).collect();
        let df: Vec<f64> = g.nodes.iter().map(|x| 3.0 * x * x).collect();
        assert!(max_err(&d.apply(&f), &df) <= 1e-10);
    }

    #[test]
    fn diff_exact_through_degree_n_minus_one() {
        for n in [4, 6, 9, 12, 16] {
            let g = cheb_nodes(n, -0.3, 1.7);
            let d = cheb_diff(&g);
            for deg in 0..n {
                let f: Vec<f64> = g.nodes.iter().map(|x| x.powi(deg as i32)).collect();
                let df: Vec<f64> = g
                    .nodes
                    .iter()
                    .map(|x| {
                        if deg == 0 {
                            0.0
                        } else {
                            deg as f64 * x.powi(deg as i32 - 1)
                        }
                    })
                    .collect();
                let scale = df.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
                assert!(max_err(&d.apply(&f), &df) <= 1e-10 * scale, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn laplacian_only_when_potential_vanishes() {
        let rect = Rect::new(0.0, 0.5, 0.0, 0.5).unwrap();
        let spec = ProblemSpec::new(rect, 3.0).with_coefficient(|_, _| 0.0);
        let disc = build_leaf_discretization(&rect, &spec, 6).unwrap();
        assert!(disc.potential.iter().all(|&v| v == 0.0));
        let spec0 = ProblemSpec::new(rect, 0.0)
            .with_eta(ONE)
            .with_coefficient(|x, y| 5.0 + x + y);
        let disc0 = build_leaf_discretization(&rect, &spec0, 6).unwrap();
        assert!(disc0.potential.iter().all(|&v| v == 0.0));
        // -Δ(x² + y²) = -4
        let u: CVector = disc0
            .points
            .iter()
            .map(|&[x, y]| C64::new(x * x + y * y, 0.0))
            .collect();
        for v in disc0.apply_interior(&u) {
            assert!((v - C64::new(-4.0, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn normal_rows_are_outward_derivatives() {
        let rect = Rect::new(0.0, 1.0, 0.0, 2.0).unwrap();
        let spec = ProblemSpec::new(rect, 1.0);
        let disc = build_leaf_discretization(&rect, &spec, 7).unwrap();
        // u = x² y exactly representable; ∂u/∂ν per side
        let u: CVector = disc.points.iter().map(|&[x, y]| C64::new(x * x * y, 0.0)).collect();
        let nu = matvec(&disc.n_mat, &u, Workers::ONE).unwrap();
        let boundary_sides = [Side::South, Side::East, Side::North, Side::West];
        let n = disc.n_c - 2;
        for (r, v) in nu.iter().enumerate() {
            let [x, y] = disc.points[r];
            let side = boundary_sides[r / n];
            let [nx, ny] = side.outward_normal();
            let expect = nx * 2.0 * x * y + ny * x * x;
            assert!((v.re - expect).abs() < 1e-10, "row {r} {side:?}");
        }
        // south rows: minus the y-derivative row of the full grid
        let n_c = disc.n_c;
        let all = disc.sets.all();
        for (r, &p) in disc.sets.south.iter().enumerate() {
            let (px, py) = (p % n_c, p / n_c);
            for (c, &q) in all.iter().enumerate() {
                let (qx, qy) = (q % n_c, q / n_c);
                let expect = if qx == px { -disc.dy.get(py, qy) } else { 0.0 };
                assert_eq!(disc.n_mat[(r, c)].re, expect);
            }
        }
    }

    fn leaf_fixture(n_c: usize) -> (LeafDiscretization, LeafOperators) {
        let rect = Rect::new(0.25, 0.75, -0.1, 0.4).unwrap();
        let spec = ProblemSpec::new(rect, 4.0)
            .with_eta(C64::new(4.0, 0.5))
            .with_coefficient(|x, y| 1.0 + 0.3 * (x * y).sin());
        leaf_operators_for(&rect, &spec, n_c, Workers::ONE).unwrap()
    }

    #[test]
    fn operator_shapes_and_inverse_residual() {
        let (disc, ops) = leaf_fixture(8);
        let (nb, ni, nt) = (disc.n_b(), disc.n_i(), disc.n_total());
        assert_eq!(ops.r.as_ref().unwrap().shape(), (nb, nb));
        assert_eq!(ops.psi.shape(), (nt, nb));
        assert_eq!(ops.y.shape(), (nt, ni));
        assert_eq!(ops.gamma.shape(), (nb, ni));
        let bpsi = gemm(&disc.b_mat, &ops.psi, Workers::ONE).unwrap();
        let mut target = CMatrix::zeros(nt, nb);
        for k in 0..nb {
            target[(k, k)] = ONE;
        }
        assert!(bpsi.max_abs_diff(&target) <= 1e-10);
        let by = gemm(&disc.b_mat, &ops.y, Workers::ONE).unwrap();
        let mut target = CMatrix::zeros(nt, ni);
        for k in 0..ni {
            target[(nb + k, k)] = ONE;
        }
        assert!(by.max_abs_diff(&target) <= 1e-10);
        let gpsi = gemm(&disc.g_mat, &ops.psi, Workers::ONE).unwrap();
        assert!(gpsi.max_abs_diff(ops.r.as_ref().unwrap()) <= 1e-12 * gpsi.max_abs().max(1.0));
    }

    #[test]
    fn outgoing_data_superposition() {
        let (disc, ops) = leaf_fixture(9);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut rand_vec = |n: usize| -> CVector {
            (0..n)
                .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect()
        };
        let t = rand_vec(disc.n_b());
        let s = rand_vec(disc.n_i());
        let w = Workers::ONE;
        let mut u = matvec(&ops.psi, &t, w).unwrap();
        for (a, b) in u.iter_mut().zip(matvec(&ops.y, &s, w).unwrap()) {
            *a += b;
        }
        let gu = matvec(&disc.g_mat, &u, w).unwrap();
        let mut g = matvec(ops.r.as_ref().unwrap(), &t, w).unwrap();
        for (a, b) in g.iter_mut().zip(matvec(&ops.gamma, &s, w).unwrap()) {
            *a += b;
        }
        let scale = g.iter().fold(0.0_f64, |m, v| m.max(v.norm()));
        let diff = gu.iter().zip(&g).fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()));
        assert!(diff <= 1e-11 * scale.max(1.0), "diff {diff}");
    }

    fn single_leaf_error(n_c: usize) -> f64 {
        let m = ManufacturedSolution::homogeneous_wave(3.0, C64::new(3.0, 0.0), 0.7);
        let spec = m.spec();
        let rect = spec.domain;
        let (disc, ops) = leaf_operators_for(&rect, &spec, n_c, Workers::ONE).unwrap();
        let sides = [Side::South, Side::East, Side::North, Side::West];
        let per = n_c - 2;
        let t: CVector = disc.points[..disc.n_b()]
            .iter()
            .enumerate()
            .map(|(r, &[x, y])| (spec.boundary_data)(x, y, sides[r / per]))
            .collect();
        let u = matvec(&ops.psi, &t, Workers::ONE).unwrap();
        disc.points
            .iter()
            .zip(&u)
            .map(|(&[x, y], v)| (v - m.exact(x, y)).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn single_leaf_plane_wave_converges_spectrally() {
        let errs: Vec<f64> = [6, 9, 12, 16].iter().map(|&n| single_leaf_error(n)).collect();
        assert!(errs[3] < 1e-9, "{errs:?}");
        for w in errs.windows(2) {
            assert!(w[1] < w[0] * 0.2 || w[1] < 1e-11, "{errs:?}");
        }
    }

    #[test]
    fn body_load_sampling_skips_homogeneous() {
        let (disc, _) = leaf_fixture(6);
        let spec = ProblemSpec::new(disc.rect, 1.0);
        assert!(sample_body_load(&disc, &spec).iter().all(|v| *v == ZERO));
    }
}
