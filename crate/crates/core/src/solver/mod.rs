//! Build and solve stages over the box tree.

pub mod checkpoint;
pub mod oracle;

use std::time::Instant;

use thiserror::Error;

use crate::exec::run_level;
use crate::geometry::{build_uniform_tree, BoxTree, GeometryError};
use crate::linalg::{matvec, matvec_acc, CMatrix, CVector, LinalgError, C64, ZERO};
use crate::merge::{apply_upsilon, gamma_from_corrections, merge, MergeError, MergeOperators};
use crate::planner::{PlanError, Stage, ThreadPair, ThreadPlan};
use crate::problem::{ProblemError, ProblemSpec};
use crate::spectral::{
    build_leaf_discretization, build_leaf_operators, discretize_with_potential, sample_potential, LeafError,
    LeafOperators,
};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("leaf {id}: {source}")]
    Leaf { id: usize, source: LeafError },
    #[error("merge at box {id}: {source}")]
    Merge { id: usize, source: MergeError },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("problem data does not match the built operators: {0}")]
    Mismatch(String),
}

/// Stored operators of one box.
#[derive(Debug, Clone)]
pub enum BoxOps {
    Leaf(LeafOperators),
    Merge(MergeOperators),
}

impl BoxOps {
    pub fn r(&self) -> Option<&CMatrix> {
        match self {
            BoxOps::Leaf(l) => l.r.as_ref(),
            BoxOps::Merge(m) => m.r_tau.as_ref(),
        }
    }

    fn take_r(&mut self) -> Option<CMatrix> {
        match self {
            BoxOps::Leaf(l) => l.r.take(),
            BoxOps::Merge(m) => m.r_tau.take(),
        }
    }

    /// Names of the matrices currently held.
    pub fn retained_names(&self) -> Vec<&'static str> {
        match self {
            BoxOps::Leaf(l) => {
                let mut v = vec!["psi", "y", "gamma"];
                if l.r.is_some() {
                    v.push("r");
                }
                v
            }
            BoxOps::Merge(m) => m.retained().into_iter().map(|(n, _)| n).collect(),
        }
    }

    pub fn bytes(&self) -> usize {
        match self {
            BoxOps::Leaf(l) => {
                l.psi.byte_size() + l.y.byte_size() + l.gamma.byte_size() + l.r.as_ref().map_or(0, CMatrix::byte_size)
            }
            BoxOps::Merge(m) => m.retained().iter().map(|(_, a)| a.byte_size()).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelTiming {
    pub stage: Stage,
    pub level: usize,
    pub boxes: usize,
    pub pair: ThreadPair,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub tree: BoxTree,
    pub kappa: f64,
    pub eta: C64,
    pub ops: Vec<BoxOps>,
    pub plan: ThreadPlan,
    pub timings: Vec<LevelTiming>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// Values at every distinct point, in the tree's global numbering.
    pub u: CVector,
    pub timings: Vec<LevelTiming>,
    pub upward_seconds: f64,
    pub downward_seconds: f64,
}

impl Solution {
    pub fn seconds(&self) -> f64 {
        self.upward_seconds + self.downward_seconds
    }

    /// `max_j |exact(x_j) - u_j|` over all points.
    pub fn max_error(&self, tree: &BoxTree, exact: impl Fn(f64, f64) -> C64) -> f64 {
        tree.numbering()
            .coords
            .iter()
            .zip(&self.u)
            .map(|(&[x, y], v)| (exact(x, y) - v).norm())
            .fold(0.0, f64::max)
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}

/// Builds all leaf and merge operators for `spec` on a uniform tree.
pub fn build(spec: &ProblemSpec, levels: usize, n_c: usize, plan: &ThreadPlan) -> Result<SolverState, SolverError> {
    spec.validate()?;
    let tree = build_uniform_tree(spec.domain, levels, n_c)?;
    build_on_tree(spec, tree, plan)
}

pub fn build_on_tree(spec: &ProblemSpec, tree: BoxTree, plan: &ThreadPlan) -> Result<SolverState, SolverError> {
    spec.validate()?;
    plan.validate(&tree)?;
    let mut ops: Vec<Option<BoxOps>> = (0..tree.n_boxes()).map(|_| None).collect();
    let mut timings = Vec::with_capacity(tree.levels);

    let leaf_level = tree.leaf_level();
    let pair = plan.pair(Stage::Build, leaf_level);
    // coefficient sampling stays outside the timed region
    let potentials = run_level(pair, tree.leaf_ids().collect(), |id, _| {
        sample_potential(&tree.node(id).rect, spec, tree.n_c)
            .map(|p| (id, p))
            .map_err(|source| SolverError::Leaf { id, source })
    })?;
    let (built, seconds) = timed(|| {
        run_level(pair, potentials, |(id, potential), w| {
            let disc = discretize_with_potential(&tree.node(id).rect, spec.eta, tree.n_c, potential)
                .map_err(|source| SolverError::Leaf { id, source })?;
            let leaf = build_leaf_operators(&disc, w).map_err(|source| SolverError::Leaf { id, source })?;
            Ok::<_, SolverError>((id, leaf))
        })
    });
    for (id, leaf) in built? {
        ops[id - 1] = Some(BoxOps::Leaf(leaf));
    }
    timings.push(LevelTiming {
        stage: Stage::Build,
        level: leaf_level,
        boxes: tree.boxes_on_level(leaf_level),
        pair,
        seconds,
    });

    for level in (0..leaf_level).rev() {
        let pair = plan.pair(Stage::Build, level);
        let mut items = Vec::with_capacity(tree.boxes_on_level(level));
        for id in tree.level_range(level) {
            let (a, b) = tree.node(id).children.expect("interior box has children");
            let mut take = |c: usize| {
                ops[c - 1]
                    .as_mut()
                    .and_then(BoxOps::take_r)
                    .expect("child built before parent")
            };
            let ra = take(a);
            let rb = take(b);
            items.push((id, ra, rb));
        }
        let (merged, seconds) = timed(|| {
            run_level(pair, items, |(id, ra, rb), w| {
                let idx = tree.interface(id).expect("interior box interface");
                merge(ra, rb, idx, w)
                    .map(|m| (id, m))
                    .map_err(|source| SolverError::Merge { id, source })
            })
        });
        for (id, m) in merged? {
            ops[id - 1] = Some(BoxOps::Merge(m));
        }
        timings.push(LevelTiming {
            stage: Stage::Build,
            level,
            boxes: tree.boxes_on_level(level),
            pair,
            seconds,
        });
    }

    let ops = ops.into_iter().map(|o| o.expect("every box built")).collect();
    Ok(SolverState {
        tree,
        kappa: spec.kappa,
        eta: spec.eta,
        ops,
        plan: plan.clone(),
        timings,
    })
}

/// Per-box vectors used by the two sweeps.
#[derive(Debug, Default)]
struct SolveScratch {
    /// Outgoing particular data `h` per box.
    h: Vec<CVector>,
    /// Interface corrections `(t̃α, t̃β)` per merge box.
    t_tilde: Vec<(CVector, CVector)>,
    /// Particular solution per leaf.
    u_tilde: Vec<CVector>,
    /// Incoming impedance data per box.
    t: Vec<CVector>,
}

impl SolverState {
    pub fn levels(&self) -> usize {
        self.tree.levels
    }

    pub fn n_c(&self) -> usize {
        self.tree.n_c
    }

    pub fn box_ops(&self, id: usize) -> &BoxOps {
        &self.ops[id - 1]
    }

    /// The root's impedance-to-impedance operator.
    pub fn root_r(&self) -> Option<&CMatrix> {
        self.ops[0].r()
    }

    /// Boxes other than the root that still hold a full `R`.
    pub fn retained_child_r_count(&self) -> usize {
        self.ops[1..].iter().filter(|o| o.r().is_some()).count()
    }

    pub fn operator_bytes(&self) -> usize {
        self.ops.iter().map(BoxOps::bytes).sum()
    }

    pub fn build_seconds(&self) -> f64 {
        self.timings.iter().map(|t| t.seconds).sum()
    }

    fn check_spec(&self, spec: &ProblemSpec) -> Result<(), SolverError> {
        if spec.kappa != self.kappa || spec.eta != self.eta {
            return Err(SolverError::Mismatch(format!(
                "built for kappa={} eta={}, got kappa={} eta={}",
                self.kappa, self.eta, spec.kappa, spec.eta
            )));
        }
        if spec.domain != self.tree.domain {
            return Err(SolverError::Mismatch("domain differs".into()));
        }
        Ok(())
    }

    /// Applies the stored operators to the body load and boundary data of
    /// `spec`. Performs no factorizations.
    pub fn solve(&self, spec: &ProblemSpec, plan: &ThreadPlan) -> Result<Solution, SolverError> {
        self.check_spec(spec)?;
        plan.validate(&self.tree)?;
        let tree = &self.tree;
        let n_boxes = tree.n_boxes();
        let leaf_level = tree.leaf_level();
        let mut scratch = SolveScratch {
            h: vec![Vec::new(); n_boxes],
            t_tilde: vec![(Vec::new(), Vec::new()); n_boxes],
            u_tilde: vec![Vec::new(); n_boxes],
            t: vec![Vec::new(); n_boxes],
        };
        let mut timings = Vec::new();
        let mut upward_seconds = 0.0;

        if spec.body_load.is_some() {
            let loads: Vec<(usize, CVector)> = tree
                .leaf_ids()
                .map(|id| {
                    let s: CVector = tree
                        .leaf_interior_coords(id)
                        .iter()
                        .map(|&[x, y]| spec.body_load_at(x, y))
                        .collect();
                    (id, s)
                })
                .collect();
            let pair = plan.pair(Stage::Upward, leaf_level);
            let (res, seconds) = timed(|| {
                run_level(pair, loads, |(id, s), w| {
                    let BoxOps::Leaf(l) = &self.ops[id - 1] else {
                        unreachable!()
                    };
                    Ok::<_, SolverError>((id, matvec(&l.y, &s, w)?, matvec(&l.gamma, &s, w)?))
                })
            });
            for (id, u, h) in res? {
                scratch.u_tilde[id - 1] = u;
                scratch.h[id - 1] = h;
            }
            upward_seconds += seconds;
            timings.push(LevelTiming {
                stage: Stage::Upward,
                level: leaf_level,
                boxes: tree.boxes_on_level(leaf_level),
                pair,
                seconds,
            });

            for level in (0..leaf_level).rev() {
                let pair = plan.pair(Stage::Upward, level);
                let h = &scratch.h;
                let (res, seconds) = timed(|| {
                    run_level(pair, tree.level_range(level).collect(), |id, w| {
                        let BoxOps::Merge(m) = &self.ops[id - 1] else {
                            unreachable!()
                        };
                        let idx = tree.interface(id).expect("interface");
                        let (a, b) = tree.node(id).children.expect("children");
                        let (ha, hb) = (&h[a - 1], &h[b - 1]);
                        let ha3: CVector = idx.i3_alpha.iter().map(|&p| ha[p]).collect();
                        let hb3: CVector = idx.i3_beta.iter().map(|&p| hb[p]).collect();
                        let (ta, tb) =
                            apply_upsilon(m, &ha3, &hb3, w).map_err(|source| SolverError::Merge { id, source })?;
                        let mut h_tau = gamma_from_corrections(m, &ta, &tb, w)
                            .map_err(|source| SolverError::Merge { id, source })?;
                        for (k, &p) in idx.i1.iter().enumerate() {
                            h_tau[k] += ha[p];
                        }
                        for (k, &p) in idx.i2.iter().enumerate() {
                            h_tau[idx.n1() + k] += hb[p];
                        }
                        Ok::<_, SolverError>((id, h_tau, ta, tb))
                    })
                });
                for (id, h_tau, ta, tb) in res? {
                    scratch.h[id - 1] = h_tau;
                    scratch.t_tilde[id - 1] = (ta, tb);
                    let (a, b) = tree.node(id).children.expect("children");
                    scratch.h[a - 1] = Vec::new();
                    scratch.h[b - 1] = Vec::new();
                }
                upward_seconds += seconds;
                timings.push(LevelTiming {
                    stage: Stage::Upward,
                    level,
                    boxes: tree.boxes_on_level(level),
                    pair,
                    seconds,
                });
            }
        }

        scratch.t[0] = tree
            .root_boundary()
            .iter()
            .map(|p| (spec.boundary_data)(p.x, p.y, p.side))
            .collect();
        let mut downward_seconds = 0.0;
        for level in 0..leaf_level {
            let pair = plan.pair(Stage::Downward, level);
            let (t_all, t_tilde) = (&scratch.t, &scratch.t_tilde);
            let (res, seconds) = timed(|| {
                run_level(pair, tree.level_range(level).collect(), |id, w| {
                    let BoxOps::Merge(m) = &self.ops[id - 1] else {
                        unreachable!()
                    };
                    let idx = tree.interface(id).expect("interface");
                    let t = &t_all[id - 1];
                    let mut t3a = matvec(&m.phi_alpha, t, w)?;
                    let mut t3b = matvec(&m.phi_beta, t, w)?;
                    let (ta_corr, tb_corr) = &t_tilde[id - 1];
                    if !ta_corr.is_empty() {
                        t3a.iter_mut().zip(ta_corr).for_each(|(x, c)| *x += c);
                        t3b.iter_mut().zip(tb_corr).for_each(|(x, c)| *x += c);
                    }
                    let mut ta = vec![ZERO; idx.n1() + idx.n3()];
                    let mut tb = vec![ZERO; idx.n2() + idx.n3()];
                    for (k, &p) in idx.i1.iter().enumerate() {
                        ta[p] = t[k];
                    }
                    for (k, &p) in idx.i3_alpha.iter().enumerate() {
                        ta[p] = t3a[k];
                    }
                    for (k, &p) in idx.i2.iter().enumerate() {
                        tb[p] = t[idx.n1() + k];
                    }
                    for (k, &p) in idx.i3_beta.iter().enumerate() {
                        tb[p] = t3b[k];
                    }
                    Ok::<_, SolverError>((id, ta, tb))
                })
            });
            for (id, ta, tb) in res? {
                let (a, b) = tree.node(id).children.expect("children");
                scratch.t[a - 1] = ta;
                scratch.t[b - 1] = tb;
                scratch.t[id - 1] = Vec::new();
            }
            downward_seconds += seconds;
            timings.push(LevelTiming {
                stage: Stage::Downward,
                level,
                boxes: tree.boxes_on_level(level),
                pair,
                seconds,
            });
        }

        let pair = plan.pair(Stage::Downward, leaf_level);
        let (t_all, u_tilde) = (&scratch.t, &scratch.u_tilde);
        let (res, seconds) = timed(|| {
            run_level(pair, tree.leaf_ids().collect(), |id, w| {
                let BoxOps::Leaf(l) = &self.ops[id - 1] else {
                    unreachable!()
                };
                let mut u = if u_tilde[id - 1].is_empty() {
                    vec![ZERO; l.psi.rows()]
                } else {
                    u_tilde[id - 1].clone()
                };
                matvec_acc(&mut u, &l.psi, &t_all[id - 1], w, true)?;
                Ok::<_, SolverError>((id, u))
            })
        });
        let numbering = tree.numbering();
        let mut u_global = vec![ZERO; numbering.len()];
        let first_leaf = tree.leaf_ids().start;
        for (id, u) in res? {
            let k = id - first_leaf;
            let map = &numbering.leaf_maps[k];
            for &p in &numbering.leaf_owned[k] {
                u_global[map[p]] = u[p];
            }
        }
        downward_seconds += seconds;
        timings.push(LevelTiming {
            stage: Stage::Downward,
            level: leaf_level,
            boxes: tree.boxes_on_level(leaf_level),
            pair,
            seconds,
        });

        Ok(Solution {
            u: u_global,
            timings,
            upward_seconds,
            downward_seconds,
        })
    }
}

/// Relative collocation residual `Â(I_i, I) u - s` on the given leaves,
/// scaled by `max(|s|, |Â|_∞ |u|)`.
pub fn residual_check(
    state: &SolverState,
    solution: &Solution,
    spec: &ProblemSpec,
    sample_leaves: &[usize],
) -> Result<f64, SolverError> {
    let tree = &state.tree;
    let numbering = tree.numbering();
    let first_leaf = tree.leaf_ids().start;
    let mut worst = 0.0_f64;
    for &id in sample_leaves {
        let k = tree
            .leaf_index(id)
            .ok_or_else(|| SolverError::Mismatch(format!("box {id} is not a leaf")))?;
        debug_assert_eq!(k, id - first_leaf);
        let disc = build_leaf_discretization(&tree.node(id).rect, spec, tree.n_c)
            .map_err(|source| SolverError::Leaf { id, source })?;
        let u_local: CVector = numbering.leaf_maps[k].iter().map(|&g| solution.u[g]).collect();
        let applied = disc.apply_interior(&u_local);
        let s: CVector = disc.points[disc.n_b()..]
            .iter()
            .map(|&[x, y]| spec.body_load_at(x, y))
            .collect();
        let num = applied.iter().zip(&s).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if num == 0.0 {
            continue;
        }
        let all = disc.sets.all();
        let a_norm = disc
            .sets
            .interior
            .iter()
            .map(|&p| all.iter().map(|&q| disc.a_hat(p, q).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let u_max = u_local.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let s_max = s.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let scale = s_max.max(a_norm * u_max).max(f64::MIN_POSITIVE);
        worst = worst.max(num / scale);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;
    use crate::problem::ManufacturedSolution;

    fn serial(levels: usize) -> ThreadPlan {
        ThreadPlan::serial(levels)
    }

    #[test]
    fn single_leaf_build() {
        let spec = ProblemSpec::new(Rect::unit_square(), 2.0);
        let state = build(&spec, 1, 8, &serial(1)).unwrap();
        assert_eq!(state.ops.len(), 1);
        assert_eq!(state.box_ops(1).retained_names(), vec!["psi", "y", "gamma", "r"]);
        assert!(state.root_r().is_some());
    }

    #[test]
    fn four_by_four_build_order_and_storage() {
        let spec = ProblemSpec::new(Rect::unit_square(), 2.0);
        let state = build(&spec, 5, 6, &serial(5)).unwrap();
        assert_eq!(state.ops.len(), 31);
        assert_eq!(state.tree.n_leaves(), 16);
        let leaves = state.ops.iter().filter(|o| matches!(o, BoxOps::Leaf(_))).count();
        assert_eq!(leaves, 16);
        assert_eq!(state.retained_child_r_count(), 0);
        assert!(state.root_r().is_some());
        let levels: Vec<usize> = state.timings.iter().map(|t| t.level).collect();
        assert_eq!(levels, vec![4, 3, 2, 1, 0]);
    }

    #[test]
    fn zero_data_zero_solution() {
        let spec = ProblemSpec::new(Rect::unit_square(), 3.0);
        let state = build(&spec, 3, 6, &serial(3)).unwrap();
        let sol = state.solve(&spec, &serial(3)).unwrap();
        assert_eq!(sol.u.len(), state.tree.n_points());
        assert!(sol.u.iter().all(|v| *v == ZERO));
        assert_eq!(residual_check(&state, &sol, &spec, &[4, 7]).unwrap(), 0.0);
    }

    #[test]
    fn homogeneous_plane_wave() {
        let m = ManufacturedSolution::homogeneous_wave(4.0, C64::new(4.0, 0.0), 0.4);
        let spec = m.spec();
        for levels in [1, 2, 4] {
            let state = build(&spec, levels, 16, &serial(levels)).unwrap();
            let sol = state.solve(&spec, &serial(levels)).unwrap();
            assert!(sol.upward_seconds == 0.0);
            let err = sol.max_error(&state.tree, |x, y| m.exact(x, y));
            assert!(err < 1e-8, "levels {levels}: {err}");
        }
    }

    #[test]
    fn body_load_manufactured_solution() {
        let m = ManufacturedSolution::plane_wave(
            3.0,
            C64::new(3.0, 1.0),
            [5.0, -2.0],
            std::sync::Arc::new(crate::problem::gaussian_bump),
        );
        let spec = m.spec();
        let state = build(&spec, 4, 12, &serial(4)).unwrap();
        let sol = state.solve(&spec, &serial(4)).unwrap();
        let err = sol.max_error(&state.tree, |x, y| m.exact(x, y));
        assert!(err < 1e-8, "{err}");
        let res = residual_check(&state, &sol, &spec, &[8, 11, 15]).unwrap();
        assert!(res < 1e-8, "{res}");
    }

    #[test]
    fn constant_solution_exact() {
        let eta = C64::new(1.0, 0.0);
        let m = ManufacturedSolution::constant(eta);
        let spec = m.spec();
        for (levels, n_c) in [(1, 6), (3, 9), (5, 6)] {
            let state = build(&spec, levels, n_c, &serial(levels)).unwrap();
            let sol = state.solve(&spec, &serial(levels)).unwrap();
            assert!(sol.max_error(&state.tree, |_, _| C64::new(1.0, 0.0)) <= 1e-12);
        }
    }

    #[test]
    fn rejects_mismatched_spec() {
        let spec = ProblemSpec::new(Rect::unit_square(), 2.0);
        let state = build(&spec, 2, 6, &serial(2)).unwrap();
        let other = ProblemSpec::new(Rect::unit_square(), 2.5);
        assert!(matches!(state.solve(&other, &serial(2)), Err(SolverError::Mismatch(_))));
        assert!(matches!(state.solve(&spec, &serial(3)), Err(SolverError::Plan(_))));
    }

    #[test]
    fn parallel_plans_match_serial() {
        let m = ManufacturedSolution::gaussian_benchmark(2.0);
        let spec = m.spec();
        let base = build(&spec, 4, 8, &serial(4)).unwrap();
        let base_sol = base.solve(&spec, &serial(4)).unwrap();
        for pair in [
            ThreadPair { outer: 2, inner: 2 },
            ThreadPair { outer: 4, inner: 1 },
            ThreadPair { outer: 1, inner: 3 },
        ] {
            let plan = ThreadPlan::uniform(4, pair);
            let state = build(&spec, 4, 8, &plan).unwrap();
            let diff = state.root_r().unwrap().max_abs_diff(base.root_r().unwrap());
            assert!(diff <= 1e-12, "{pair}: {diff}");
            let sol = state.solve(&spec, &plan).unwrap();
            let du = sol
                .u
                .iter()
                .zip(&base_sol.u)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(du <= 1e-12, "{pair}: {du}");
        }
    }
}
