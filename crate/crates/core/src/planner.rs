//! Per-level choice of outer and inner worker counts from measured kernel
//! times.
//!
//! For level `l` with `n` boxes, a budget of `θt` threads and the measured
//! time `r[j]` of the level's dominant kernel on `j` inner workers, the cost
//! of a split `(θo, θi)` is `ceil(n / θo) * r[θi]`.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exec::pool;
use crate::geometry::BoxTree;
use crate::linalg::{lu_invert, matvec, CMatrix, Workers, C64};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("no calibration row for stage {stage} level {level}")]
    MissingRow { stage: Stage, level: usize },
    #[error("plan has {got} levels, tree has {expected}")]
    Levels { got: usize, expected: usize },
    #[error("stage {stage} level {level}: {outer}x{inner} workers exceed the budget of {budget}")]
    OverBudget {
        stage: Stage,
        level: usize,
        outer: usize,
        inner: usize,
        budget: usize,
    },
    #[error("stage {stage} level {level}: {outer} outer workers for {boxes} boxes")]
    IdleOuter {
        stage: Stage,
        level: usize,
        outer: usize,
        boxes: usize,
    },
    #[error("stage {stage} level {level}: worker counts must be positive")]
    ZeroWorkers { stage: Stage, level: usize },
    #[error("calibration line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Build,
    Upward,
    Downward,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Build, Stage::Upward, Stage::Downward];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Build => "build",
            Stage::Upward => "upward",
            Stage::Downward => "downward",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "build" => Ok(Stage::Build),
            "upward" => Ok(Stage::Upward),
            "downward" => Ok(Stage::Downward),
            _ => Err(format!("unknown stage `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelKind {
    Leaf,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Inversion,
    Matvec,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Inversion => "inversion",
            Task::Matvec => "matvec",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "inversion" => Ok(Task::Inversion),
            "matvec" => Ok(Task::Matvec),
            _ => Err(format!("unknown task `{s}`")),
        }
    }
}

/// The kernel whose time stands in for one box's work on a level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepresentativeAction {
    pub stage: Stage,
    pub kind: LevelKind,
    pub task: Task,
    pub rows: usize,
    pub cols: usize,
}

impl RepresentativeAction {
    /// Leaf levels use the leaf's interior/exterior sizes; merge levels use
    /// the interface and exterior sizes of the level's first box.
    pub fn for_level(tree: &BoxTree, stage: Stage, level: usize) -> Self {
        let n_c = tree.n_c;
        if level == tree.leaf_level() {
            let n_i = (n_c - 2) * (n_c - 2);
            let n_b = 4 * n_c - 8;
            let (task, rows, cols) = match stage {
                Stage::Build => (Task::Inversion, n_i, n_i),
                Stage::Upward => (Task::Matvec, n_i + n_b, n_i),
                Stage::Downward => (Task::Matvec, n_i + n_b, n_b),
            };
            RepresentativeAction {
                stage,
                kind: LevelKind::Leaf,
                task,
                rows,
                cols,
            }
        } else {
            let id = tree.level_range(level).start;
            let idx = tree.interface(id).expect("merge level has an interface");
            let (n3, ext) = (idx.n3(), idx.exterior());
            let (task, rows, cols) = match stage {
                Stage::Build => (Task::Inversion, n3, n3),
                Stage::Upward => (Task::Matvec, ext, n3),
                Stage::Downward => (Task::Matvec, n3, ext),
            };
            RepresentativeAction {
                stage,
                kind: LevelKind::Other,
                task,
                rows,
                cols,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ThreadPair {
    pub outer: usize,
    pub inner: usize,
}

impl ThreadPair {
    pub const SERIAL: ThreadPair = ThreadPair { outer: 1, inner: 1 };

    pub fn total(self) -> usize {
        self.outer * self.inner
    }
}

impl fmt::Display for ThreadPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.outer, self.inner)
    }
}

/// `(θo, θi)` per stage and level (index 0 is the root).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadPlan {
    pub budget: usize,
    pub build: Vec<ThreadPair>,
    pub upward: Vec<ThreadPair>,
    pub downward: Vec<ThreadPair>,
}

impl ThreadPlan {
    pub fn serial(levels: usize) -> Self {
        Self::uniform(levels, ThreadPair::SERIAL)
    }

    /// Same pair on every level, with `outer` clipped to the level's box count.
    pub fn uniform(levels: usize, pair: ThreadPair) -> Self {
        let row: Vec<ThreadPair> = (0..levels)
            .map(|l| ThreadPair {
                outer: pair.outer.min(1 << l.min(62)),
                inner: pair.inner,
            })
            .collect();
        ThreadPlan {
            budget: pair.total(),
            build: row.clone(),
            upward: row.clone(),
            downward: row,
        }
    }

    pub fn levels(&self) -> usize {
        self.build.len()
    }

    pub fn stage(&self, stage: Stage) -> &[ThreadPair] {
        match stage {
            Stage::Build => &self.build,
            Stage::Upward => &self.upward,
            Stage::Downward => &self.downward,
        }
    }

    fn stage_mut(&mut self, stage: Stage) -> &mut Vec<ThreadPair> {
        match stage {
            Stage::Build => &mut self.build,
            Stage::Upward => &mut self.upward,
            Stage::Downward => &mut self.downward,
        }
    }

    pub fn pair(&self, stage: Stage, level: usize) -> ThreadPair {
        self.stage(stage)[level]
    }

    pub fn is_serial(&self) -> bool {
        Stage::ALL
            .iter()
            .all(|&s| self.stage(s).iter().all(|p| *p == ThreadPair::SERIAL))
    }

    pub fn validate(&self, tree: &BoxTree) -> Result<(), PlanError> {
        for stage in Stage::ALL {
            let row = self.stage(stage);
            if row.len() != tree.levels {
                return Err(PlanError::Levels {
                    got: row.len(),
                    expected: tree.levels,
                });
            }
            for (level, p) in row.iter().enumerate() {
                if p.outer == 0 || p.inner == 0 {
                    return Err(PlanError::ZeroWorkers { stage, level });
                }
                if p.total() > self.budget {
                    return Err(PlanError::OverBudget {
                        stage,
                        level,
                        outer: p.outer,
                        inner: p.inner,
                        budget: self.budget,
                    });
                }
                let boxes = tree.boxes_on_level(level);
                if p.outer > boxes {
                    return Err(PlanError::IdleOuter {
                        stage,
                        level,
                        outer: p.outer,
                        boxes,
                    });
                }
            }
        }
        Ok(())
    }

    /// Text rendering: `stage level outer inner` per line.
    pub fn describe(&self) -> String {
        let mut s = format!("# budget {}\n", self.budget);
        for stage in Stage::ALL {
            for (l, p) in self.stage(stage).iter().enumerate() {
                s.push_str(&format!("{stage} {l} {} {}\n", p.outer, p.inner));
            }
        }
        s
    }
}

/// `ceil(n / θo) * r[θi]`.
pub fn level_cost(n_boxes: usize, pair: ThreadPair, r_row: &[f64]) -> f64 {
    n_boxes.div_ceil(pair.outer) as f64 * r_row[pair.inner - 1]
}

/// Exhaustive search over `θo ≤ min(θt, n)`, `θo θi ≤ θt`, `θi ≤ r_row.len()`.
/// Ties go to the larger `θo`, then the smaller `θi`.
pub fn optimize_level(n_boxes: usize, budget: usize, r_row: &[f64]) -> (ThreadPair, f64) {
    assert!(!r_row.is_empty(), "empty representative-time row");
    let n = n_boxes.max(1);
    let budget = budget.max(1);
    let mut best = (ThreadPair::SERIAL, f64::INFINITY);
    for outer in (1..=budget.min(n)).rev() {
        for inner in 1..=(budget / outer).min(r_row.len()) {
            let pair = ThreadPair { outer, inner };
            let cost = level_cost(n, pair, r_row);
            if cost < best.1 {
                best = (pair, cost);
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRow {
    pub stage: Stage,
    pub level: usize,
    pub task: Task,
    pub rows: usize,
    pub cols: usize,
    pub inner_threads: usize,
    pub seconds: f64,
}

/// Raw representative times, one row per (stage, level, inner threads).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrationTable {
    pub rows: Vec<CalibrationRow>,
}

impl CalibrationTable {
    /// `r[j-1]` for `j = 1..=max_inner` on a stage and level, if complete.
    pub fn r_row(&self, stage: Stage, level: usize, max_inner: usize) -> Option<Vec<f64>> {
        let mut row = vec![f64::NAN; max_inner];
        for r in &self.rows {
            if r.stage == stage && r.level == level && (1..=max_inner).contains(&r.inner_threads) {
                row[r.inner_threads - 1] = r.seconds;
            }
        }
        // a budget beyond the measured range reuses what was measured
        let measured = row.iter().take_while(|v| !v.is_nan()).count();
        if measured == 0 {
            return None;
        }
        row.truncate(measured);
        Some(row)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# stage level task rows cols inner_threads seconds\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{} {} {} {} {} {} {:e}\n",
                r.stage, r.level, r.task, r.rows, r.cols, r.inner_threads, r.seconds
            ));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, PlanError> {
        let mut rows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| PlanError::Parse { line: i + 1, message };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 7 {
                return Err(err(format!("expected 7 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|e| err(format!("`{s}`: {e}")));
            let row = CalibrationRow {
                stage: f[0].parse().map_err(err)?,
                level: num(f[1])?,
                task: f[2].parse().map_err(err)?,
                rows: num(f[3])?,
                cols: num(f[4])?,
                inner_threads: num(f[5])?,
                seconds: f[6].parse().map_err(|e| err(format!("`{}`: {e}", f[6])))?,
            };
            if row.inner_threads == 0 || row.seconds.is_nan() || row.seconds <= 0.0 {
                return Err(err("inner_threads and seconds must be positive".into()));
            }
            rows.push(row);
        }
        Ok(CalibrationTable { rows })
    }
}

/// Repetition settings for timing a kernel.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationProtocol {
    pub repetitions: usize,
    pub min_sample: Duration,
    pub seed: u64,
}

impl Default for CalibrationProtocol {
    fn default() -> Self {
        CalibrationProtocol {
            repetitions: 5,
            min_sample: Duration::from_millis(10),
            seed: 0x5eed,
        }
    }
}

fn unit_disc_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let r = rng.random::<f64>().sqrt();
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        C64::from_polar(r, a)
    })
}

/// Seconds per call of `action` on `inner` workers: one warm-up, then the
/// median of `repetitions` samples, each looping until `min_sample` elapses.
pub fn time_action(action: &RepresentativeAction, inner: usize, protocol: &CalibrationProtocol) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(protocol.seed ^ ((action.rows as u64) << 32 | action.cols as u64));
    let mut a = unit_disc_matrix(&mut rng, action.rows, action.cols);
    if action.task == Task::Inversion {
        // diagonal shift keeps the random matrix safely invertible
        for k in 0..action.rows.min(action.cols) {
            a[(k, k)] += C64::new(action.rows as f64, 0.0);
        }
    }
    let x: Vec<C64> = (0..action.cols).map(|_| C64::new(rng.random(), rng.random())).collect();
    let workers = Workers::new(inner);
    let run = || match action.task {
        Task::Inversion => {
            std::hint::black_box(lu_invert(&a, workers).expect("calibration matrix invertible"));
        }
        Task::Matvec => {
            std::hint::black_box(matvec(&a, &x, workers).expect("calibration shapes"));
        }
    };
    pool(inner).install(|| {
        run();
        let mut samples: Vec<f64> = (0..protocol.repetitions.max(1))
            .map(|_| {
                let start = Instant::now();
                let mut calls = 0u32;
                while calls == 0 || start.elapsed() < protocol.min_sample {
                    run();
                    calls += 1;
                }
                start.elapsed().as_secs_f64() / calls as f64
            })
            .collect();
        samples.sort_by(f64::total_cmp);
        samples[samples.len() / 2]
    })
}

/// Measures every stage and level of `tree` for `j = 1..=budget` inner workers.
pub fn calibrate(tree: &BoxTree, budget: usize, stages: &[Stage], protocol: &CalibrationProtocol) -> CalibrationTable {
    let mut rows = Vec::new();
    for &stage in stages {
        for level in 0..tree.levels {
            let action = RepresentativeAction::for_level(tree, stage, level);
            for j in 1..=budget.max(1) {
                let seconds = time_action(&action, j, protocol).max(f64::MIN_POSITIVE);
                log::debug!(
                    "calibrate {stage} level {level} {}x{} j={j}: {seconds:.3e}s",
                    action.rows,
                    action.cols
                );
                rows.push(CalibrationRow {
                    stage,
                    level,
                    task: action.task,
                    rows: action.rows,
                    cols: action.cols,
                    inner_threads: j,
                    seconds,
                });
            }
        }
    }
    CalibrationTable { rows }
}

/// Optimal pair per stage and level.
pub fn make_plan(table: &CalibrationTable, tree: &BoxTree, budget: usize) -> Result<ThreadPlan, PlanError> {
    let mut plan = ThreadPlan::serial(tree.levels);
    plan.budget = budget.max(1);
    for stage in Stage::ALL {
        for level in 0..tree.levels {
            let row = table
                .r_row(stage, level, plan.budget)
                .ok_or(PlanError::MissingRow { stage, level })?;
            let (pair, _) = optimize_level(tree.boxes_on_level(level), plan.budget, &row);
            plan.stage_mut(stage)[level] = pair;
        }
    }
    Ok(plan)
}
