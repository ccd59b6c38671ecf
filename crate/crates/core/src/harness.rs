//! Experiment drivers behind the command-line front end: convergence tables,
//! cost scaling, parallel speedup, calibration and single solves.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{build_uniform_tree, BoxTree, GeometryError, Rect};
use crate::linalg::C64;
use crate::planner::{calibrate, make_plan, CalibrationProtocol, CalibrationTable, PlanError, Stage, ThreadPlan};
use crate::problem::{ManufacturedSolution, ProblemSpec};
use crate::solver::checkpoint::{self, CheckpointError};
use crate::solver::{build_on_tree, LevelTiming, SolverError, SolverState};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(
        "estimated {needed_mb} MB exceeds the {available_mb} MB available; largest feasible level count for n_c = {n_c} is {max_levels}"
    )]
    Memory {
        needed_mb: usize,
        available_mb: usize,
        n_c: usize,
        max_levels: usize,
    },
    #[error("parallel run changed the error: serial {serial:e}, {threads} threads {parallel:e}")]
    Nondeterministic { threads: usize, serial: f64, parallel: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Convergence,
    Scaling,
    Speedup,
    Calibrate,
    SolveOnce,
    Tree,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Convergence => "convergence",
            Command::Scaling => "scaling",
            Command::Speedup => "speedup",
            Command::Calibrate => "calibrate",
            Command::SolveOnce => "solve-once",
            Command::Tree => "tree",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanSource {
    /// Calibrate on this machine, then optimize.
    Auto,
    Serial,
    /// Optimize from a stored calibration table.
    File(PathBuf),
}

impl std::str::FromStr for PlanSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(PlanSource::Auto),
            "serial" => Ok(PlanSource::Serial),
            _ => match s.strip_prefix("file=") {
                Some(p) if !p.is_empty() => Ok(PlanSource::File(PathBuf::from(p))),
                _ => Err(format!("expected auto, serial or file=PATH, got `{s}`")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// Plane wave `exp(i2πκx) exp(i2πκy)` with the Gaussian coefficient.
    Benchmark,
    /// Free-space plane wave with `c ≡ 1` and no body load.
    PlaneWave,
    /// Zero body load and zero boundary data.
    Zero,
}

impl std::str::FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "benchmark" => Ok(ProblemKind::Benchmark),
            "plane-wave" => Ok(ProblemKind::PlaneWave),
            "zero" => Ok(ProblemKind::Zero),
            _ => Err(format!("unknown problem `{s}`")),
        }
    }
}

/// Direction of the free-space plane wave, radians from the x axis.
pub const PLANE_WAVE_ANGLE: f64 = 0.3;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub levels: (usize, usize),
    pub n_c: usize,
    pub kappa: f64,
    /// `None` means `η = κ`.
    pub eta: Option<C64>,
    pub threads: usize,
    pub plan: PlanSource,
    pub seed: u64,
    pub problem: ProblemKind,
    pub repeats: usize,
    /// Budgets for the speedup sweep; empty means powers of two up to `threads`.
    pub thread_list: Vec<usize>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub gnuplot: Option<PathBuf>,
    pub calibration: CalibrationProtocol,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            levels: (3, 7),
            n_c: 16,
            kappa: 16.0,
            eta: None,
            threads: 1,
            plan: PlanSource::Serial,
            seed: 0x5eed,
            problem: ProblemKind::Benchmark,
            repeats: 1,
            thread_list: Vec::new(),
            out: None,
            checkpoint: None,
            gnuplot: None,
            calibration: CalibrationProtocol::default(),
        }
    }

    pub fn eta(&self) -> C64 {
        self.eta.unwrap_or(C64::new(self.kappa, 0.0))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let (a, b) = self.levels;
        let bad = |m: String| Err(HarnessError::Config(m));
        if a == 0 || a > b {
            return bad(format!("level range {a}:{b} must satisfy 1 <= A <= B"));
        }
        if self.n_c < 4 {
            return bad(format!("n_c = {} is below the minimum of 4", self.n_c));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return bad(format!("kappa = {} must be finite and non-negative", self.kappa));
        }
        let eta = self.eta();
        if eta.re == 0.0 || !eta.re.is_finite() || !eta.im.is_finite() {
            return bad(format!(
                "eta = {eta} needs a nonzero finite real part (pass --eta-real when kappa = 0)"
            ));
        }
        if self.threads == 0 || self.repeats == 0 {
            return bad("threads and repeats must be positive".into());
        }
        if self.thread_list.contains(&0) {
            return bad("thread counts must be positive".into());
        }
        Ok(())
    }

    /// Canonical text of every setting that affects results.
    pub fn resolved(&self) -> String {
        let plan = match &self.plan {
            PlanSource::Auto => "auto".to_string(),
            PlanSource::Serial => "serial".to_string(),
            PlanSource::File(p) => format!("file={}", p.display()),
        };
        let eta = self.eta();
        format!(
            "command={};levels={}:{};n_c={};kappa={:e};eta={:e},{:e};threads={};plan={};seed={};problem={:?};repeats={};thread_list={:?}",
            self.command.name(),
            self.levels.0,
            self.levels.1,
            self.n_c,
            self.kappa,
            eta.re,
            eta.im,
            self.threads,
            plan,
            self.seed,
            self.problem,
            self.repeats,
            self.thread_list
        )
    }

    /// First 16 hex digits of the SHA-256 of [`RunConfig::resolved`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.resolved().as_bytes());
        digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn manufactured(&self) -> Option<ManufacturedSolution> {
        let eta = self.eta();
        match self.problem {
            ProblemKind::Benchmark => Some(ManufacturedSolution::gaussian_benchmark(self.kappa).with_eta(eta)),
            ProblemKind::PlaneWave => Some(ManufacturedSolution::homogeneous_wave(
                self.kappa,
                eta,
                PLANE_WAVE_ANGLE,
            )),
            ProblemKind::Zero => None,
        }
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        match self.manufactured() {
            Some(m) => m.spec(),
            None => ProblemSpec::new(Rect::unit_square(), self.kappa).with_eta(self.eta()),
        }
    }

    fn level_range(&self) -> std::ops::RangeInclusive<usize> {
        self.levels.0..=self.levels.1
    }
}

/// Operator storage plus the largest transient of a build, in bytes.
pub fn estimate_bytes(levels: usize, n_c: usize) -> usize {
    let c = 16usize;
    let m = n_c - 2;
    let leaf_level = levels - 1;
    let (nx, ny) = (1usize << leaf_level.div_ceil(2), 1usize << (leaf_level / 2));
    let n_b = 4 * n_c - 8;
    let n_i = m * m;
    let n_t = n_b + n_i;
    let leaves = 1usize << leaf_level;
    let mut total = leaves * (n_t * n_b + n_t * n_i + n_b * n_i) * c;
    let mut transient = (2 * n_t * n_t + n_b * n_t) * c;
    for l in 0..leaf_level {
        let (w, h) = (nx >> l.div_ceil(2), ny >> (l / 2));
        let ext = 2 * (w + h) * m;
        let n3 = if l % 2 == 0 { h * m } else { w * m };
        let boxes = 1usize << l;
        total += boxes * (2 * n3 * ext + 3 * n3 * n3 + ext * n3) * c;
        transient = transient.max((2 * ext * ext + 4 * ext * n3) * c);
    }
    let root_ext = 2 * (nx + ny) * m;
    total + root_ext * root_ext * c + transient
}

fn available_bytes() -> Option<usize> {
    let text = fs::read_to_string("/proc/meminfo").ok()?;
    let line = text.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: usize = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Refuses runs whose estimated footprint exceeds available memory.
pub fn check_memory(levels: usize, n_c: usize) -> Result<(), HarnessError> {
    let Some(avail) = available_bytes() else {
        return Ok(());
    };
    let needed = estimate_bytes(levels, n_c);
    if needed <= avail {
        return Ok(());
    }
    let max_levels = (1..levels)
        .rev()
        .find(|&l| estimate_bytes(l, n_c) <= avail)
        .unwrap_or(0);
    Err(HarnessError::Memory {
        needed_mb: needed >> 20,
        available_mb: avail >> 20,
        n_c,
        max_levels,
    })
}

/// Plan for `tree` from the configured source and a thread budget.
pub fn resolve_plan(cfg: &RunConfig, tree: &BoxTree, budget: usize) -> Result<ThreadPlan, HarnessError> {
    match &cfg.plan {
        PlanSource::Serial => Ok(ThreadPlan::serial(tree.levels)),
        PlanSource::Auto if budget == 1 => Ok(ThreadPlan::serial(tree.levels)),
        PlanSource::Auto => {
            let mut protocol = cfg.calibration;
            protocol.seed = cfg.seed;
            let table = calibrate(tree, budget, &Stage::ALL, &protocol);
            Ok(make_plan(&table, tree, budget)?)
        }
        PlanSource::File(path) => {
            let table = CalibrationTable::from_text(&fs::read_to_string(path)?)?;
            Ok(make_plan(&table, tree, budget)?)
        }
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// One build + solve with timings and the error against the exact solution.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub levels: usize,
    pub n_c: usize,
    pub n_points: usize,
    pub e_inf: Option<f64>,
    pub build_seconds: f64,
    pub solve_seconds: f64,
    pub build_levels: Vec<LevelTiming>,
    pub solve_levels: Vec<LevelTiming>,
}

fn run_once(
    cfg: &RunConfig,
    spec: &ProblemSpec,
    levels: usize,
    budget: usize,
) -> Result<(RunRecord, SolverState, crate::solver::Solution), HarnessError> {
    check_memory(levels, cfg.n_c)?;
    let tree = build_uniform_tree(spec.domain, levels, cfg.n_c)?;
    let plan = resolve_plan(cfg, &tree, budget)?;
    let state = build_on_tree(spec, tree, &plan)?;
    let solution = state.solve(spec, &plan)?;
    let e_inf = cfg
        .manufactured()
        .map(|m| solution.max_error(&state.tree, |x, y| m.exact(x, y)))
        .or_else(|| {
            (cfg.problem == ProblemKind::Zero).then(|| solution.u.iter().map(|v| v.norm()).fold(0.0, f64::max))
        });
    let record = RunRecord {
        levels,
        n_c: cfg.n_c,
        n_points: state.tree.n_points(),
        e_inf,
        build_seconds: state.build_seconds(),
        solve_seconds: solution.seconds(),
        build_levels: state.timings.clone(),
        solve_levels: solution.timings.clone(),
    };
    Ok((record, state, solution))
}

fn keep_faster(best: RunRecord, r: RunRecord) -> RunRecord {
    RunRecord {
        build_seconds: best.build_seconds.min(r.build_seconds),
        solve_seconds: best.solve_seconds.min(r.solve_seconds),
        build_levels: if r.build_seconds < best.build_seconds {
            r.build_levels
        } else {
            best.build_levels
        },
        solve_levels: if r.solve_seconds < best.solve_seconds {
            r.solve_levels
        } else {
            best.solve_levels
        },
        ..best
    }
}

/// Best-of-`repeats` timings for each level count, error from the first
/// run. Repetitions sweep the whole range before repeating, so a slow spell
/// on the machine does not land on every sample of one size.
fn timed_runs(
    cfg: &RunConfig,
    spec: &ProblemSpec,
    levels: &[usize],
    budget: usize,
) -> Result<Vec<RunRecord>, HarnessError> {
    let mut best: Vec<Option<RunRecord>> = vec![None; levels.len()];
    for _ in 0..cfg.repeats {
        for (slot, &l) in best.iter_mut().zip(levels) {
            let (r, _, _) = run_once(cfg, spec, l, budget)?;
            *slot = Some(match slot.take() {
                None => r,
                Some(b) => keep_faster(b, r),
            });
        }
    }
    Ok(best.into_iter().map(|r| r.expect("at least one repeat")).collect())
}

fn timed_run(cfg: &RunConfig, spec: &ProblemSpec, levels: usize, budget: usize) -> Result<RunRecord, HarnessError> {
    Ok(timed_runs(cfg, spec, &[levels], budget)?.remove(0))
}

pub fn run_convergence(cfg: &RunConfig) -> Result<Vec<RunRecord>, HarnessError> {
    cfg.validate()?;
    let spec = cfg.problem_spec();
    let levels: Vec<usize> = cfg.level_range().collect();
    let rows = timed_runs(cfg, &spec, &levels, cfg.threads)?;
    for r in &rows {
        log::info!(
            "convergence L={} N={} e_inf={:?} build={:.3}s solve={:.3}s",
            r.levels,
            r.n_points,
            r.e_inf,
            r.build_seconds,
            r.solve_seconds
        );
    }
    Ok(rows)
}

pub fn convergence_csv(cfg: &RunConfig, rows: &[RunRecord]) -> String {
    let hash = cfg.hash();
    let mut s = String::from("config_hash,n_c,levels,N,e_inf,build_s,solve_s\n");
    for r in rows {
        let e = r.e_inf.map_or(String::from("nan"), |e| format!("{e:e}"));
        let _ = writeln!(
            s,
            "{hash},{},{},{},{e},{:.6},{:.6}",
            r.n_c, r.levels, r.n_points, r.build_seconds, r.solve_seconds
        );
    }
    s
}

#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub runs: Vec<RunRecord>,
    pub build_slope: f64,
    pub solve_slope: f64,
    pub warnings: Vec<String>,
}

impl ScalingReport {
    /// Whether the largest run's merge build time, summed over pairs of
    /// adjacent levels (one refinement in each direction), peaks at the top.
    pub fn root_heavy(&self) -> bool {
        let Some(r) = self.runs.last() else { return false };
        let mut merges: Vec<(usize, f64)> = r
            .build_levels
            .iter()
            .filter(|t| t.level + 1 < r.levels)
            .map(|t| (t.level, t.seconds))
            .collect();
        merges.sort_by_key(|m| m.0);
        let pairs: Vec<f64> = merges.chunks(2).map(|c| c.iter().map(|m| m.1).sum()).collect();
        pairs.iter().skip(1).all(|&p| p <= pairs[0])
    }
}

pub fn run_scaling(cfg: &RunConfig) -> Result<ScalingReport, HarnessError> {
    cfg.validate()?;
    let spec = cfg.problem_spec();
    let levels: Vec<usize> = cfg.level_range().collect();
    let runs = timed_runs(cfg, &spec, &levels, cfg.threads)?;
    let warnings: Vec<String> = runs
        .iter()
        .filter(|r| r.build_seconds < 0.05 || r.solve_seconds < 0.05)
        .map(|r| {
            format!(
                "L={}: build {:.4}s / solve {:.4}s under 50 ms, timer noise may dominate",
                r.levels, r.build_seconds, r.solve_seconds
            )
        })
        .collect();
    let n: Vec<f64> = runs.iter().map(|r| r.n_points as f64).collect();
    let b: Vec<f64> = runs.iter().map(|r| r.build_seconds).collect();
    let s: Vec<f64> = runs.iter().map(|r| r.solve_seconds).collect();
    let (build_slope, solve_slope) = if runs.len() >= 2 {
        (fit_loglog_slope(&n, &b), fit_loglog_slope(&n, &s))
    } else {
        (f64::NAN, f64::NAN)
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ScalingReport {
        runs,
        build_slope,
        solve_slope,
        warnings,
    })
}

pub fn scaling_csv(cfg: &RunConfig, report: &ScalingReport) -> String {
    let hash = cfg.hash();
    let mut s = String::from("config_hash,n_c,levels,N,build_s,solve_s\n");
    for r in &report.runs {
        let _ = writeln!(
            s,
            "{hash},{},{},{},{:.6},{:.6}",
            r.n_c, r.levels, r.n_points, r.build_seconds, r.solve_seconds
        );
    }
    s
}

/// Per-level timings: `stage,level,boxes,outer,inner,seconds` plus run keys.
pub fn level_timings_csv(cfg: &RunConfig, runs: &[RunRecord]) -> String {
    let hash = cfg.hash();
    let mut s = String::from("config_hash,levels,N,stage,level,boxes,outer,inner,seconds\n");
    for r in runs {
        for t in r.build_levels.iter().chain(&r.solve_levels) {
            let _ = writeln!(
                s,
                "{hash},{},{},{},{},{},{},{},{:.6}",
                r.levels, r.n_points, t.stage, t.level, t.boxes, t.pair.outer, t.pair.inner, t.seconds
            );
        }
    }
    s
}

#[derive(Debug, Clone)]
pub struct SpeedupRow {
    pub threads: usize,
    pub build_seconds: f64,
    pub solve_seconds: f64,
    pub build_speedup: f64,
    pub solve_speedup: f64,
    pub e_inf: f64,
}

fn sweep_budgets(cfg: &RunConfig) -> Vec<usize> {
    if !cfg.thread_list.is_empty() {
        let mut v = cfg.thread_list.clone();
        v.sort_unstable();
        v.dedup();
        return v;
    }
    let mut v = Vec::new();
    let mut t = 1;
    while t < cfg.threads {
        v.push(t);
        t *= 2;
    }
    v.push(cfg.threads);
    v
}

/// Serial baseline then one run per budget at the deepest configured level.
/// Fails if any run's error differs from serial by more than `1e-12`.
pub fn run_speedup(cfg: &RunConfig) -> Result<Vec<SpeedupRow>, HarnessError> {
    cfg.validate()?;
    let spec = cfg.problem_spec();
    let levels = cfg.levels.1;
    let serial_cfg = RunConfig {
        plan: PlanSource::Serial,
        ..cfg.clone()
    };
    let base = timed_run(&serial_cfg, &spec, levels, 1)?;
    let base_e = base.e_inf.unwrap_or(0.0);
    let mut rows = vec![SpeedupRow {
        threads: 1,
        build_seconds: base.build_seconds,
        solve_seconds: base.solve_seconds,
        build_speedup: 1.0,
        solve_speedup: 1.0,
        e_inf: base_e,
    }];
    for t in sweep_budgets(cfg).into_iter().filter(|&t| t > 1) {
        let plan_cfg = RunConfig {
            plan: if cfg.plan == PlanSource::Serial {
                PlanSource::Auto
            } else {
                cfg.plan.clone()
            },
            ..cfg.clone()
        };
        let r = timed_run(&plan_cfg, &spec, levels, t)?;
        let e = r.e_inf.unwrap_or(0.0);
        if (e - base_e).abs() > 1e-12 {
            return Err(HarnessError::Nondeterministic {
                threads: t,
                serial: base_e,
                parallel: e,
            });
        }
        rows.push(SpeedupRow {
            threads: t,
            build_seconds: r.build_seconds,
            solve_seconds: r.solve_seconds,
            build_speedup: base.build_seconds / r.build_seconds,
            solve_speedup: base.solve_seconds / r.solve_seconds,
            e_inf: e,
        });
    }
    Ok(rows)
}

pub fn speedup_csv(cfg: &RunConfig, rows: &[SpeedupRow]) -> String {
    let hash = cfg.hash();
    let mut s = String::from("config_hash,threads,stage,seconds,speedup,e_inf\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{hash},{},build,{:.6},{:.4},{:e}",
            r.threads, r.build_seconds, r.build_speedup, r.e_inf
        );
        let _ = writeln!(
            s,
            "{hash},{},solve,{:.6},{:.4},{:e}",
            r.threads, r.solve_seconds, r.solve_speedup, r.e_inf
        );
    }
    s
}

/// Calibration table for the deepest configured tree.
pub fn run_calibrate(cfg: &RunConfig) -> Result<CalibrationTable, HarnessError> {
    cfg.validate()?;
    let tree = build_uniform_tree(cfg.problem_spec().domain, cfg.levels.1, cfg.n_c)?;
    let mut protocol = cfg.calibration;
    protocol.seed = cfg.seed;
    Ok(calibrate(&tree, cfg.threads, &Stage::ALL, &protocol))
}

#[derive(Debug, Clone)]
pub struct SolveOnceReport {
    pub loaded_checkpoint: bool,
    pub build_seconds: f64,
    pub solve_seconds: f64,
    pub e_inf: Option<f64>,
    pub n_points: usize,
}

/// Builds (or loads from `cfg.checkpoint` when present), solves `spec` once
/// and writes `x,y,re,im` rows to `out` if given. A new build is saved to
/// the checkpoint path.
pub fn solve_once(
    cfg: &RunConfig,
    spec: &ProblemSpec,
    exact: Option<&dyn Fn(f64, f64) -> C64>,
    out: Option<&Path>,
) -> Result<SolveOnceReport, HarnessError> {
    cfg.validate()?;
    let levels = cfg.levels.1;
    let existing = cfg.checkpoint.as_deref().filter(|p| p.exists());
    let start = Instant::now();
    let (state, loaded) = match existing {
        Some(path) => (checkpoint::load(path)?, true),
        None => {
            check_memory(levels, cfg.n_c)?;
            let tree = build_uniform_tree(spec.domain, levels, cfg.n_c)?;
            let plan = resolve_plan(cfg, &tree, cfg.threads)?;
            let state = build_on_tree(spec, tree, &plan)?;
            if let Some(path) = &cfg.checkpoint {
                checkpoint::save(&state, path)?;
            }
            (state, false)
        }
    };
    let build_seconds = start.elapsed().as_secs_f64();
    let plan = if loaded {
        resolve_plan(cfg, &state.tree, cfg.threads)?
    } else {
        state.plan.clone()
    };
    let start = Instant::now();
    let solution = state.solve(spec, &plan)?;
    let solve_seconds = start.elapsed().as_secs_f64();
    if let Some(path) = out {
        let mut s = String::from("x,y,re,im\n");
        for (&[x, y], v) in state.tree.numbering().coords.iter().zip(&solution.u) {
            let _ = writeln!(s, "{x:.17e},{y:.17e},{:.17e},{:.17e}", v.re, v.im);
        }
        fs::write(path, s)?;
    }
    Ok(SolveOnceReport {
        loaded_checkpoint: loaded,
        build_seconds,
        solve_seconds,
        e_inf: exact.map(|f| solution.max_error(&state.tree, f)),
        n_points: state.tree.n_points(),
    })
}

/// Gnuplot script plotting a CSV produced by the given command.
pub fn gnuplot_script(command: Command, csv: &Path) -> String {
    let csv = csv.display();
    let head = "set datafile separator ','\nset key autotitle columnhead\nset grid\n";
    match command {
        Command::Convergence => format!(
            "{head}set logscale xy\nset xlabel 'N'\nset ylabel 'max error'\nplot '{csv}' using 4:5 with linespoints title 'e_inf'\n"
        ),
        Command::Scaling => format!(
            "{head}set logscale xy\nset xlabel 'N'\nset ylabel 'seconds'\nplot '{csv}' using 4:5 with linespoints title 'build', '' using 4:6 with linespoints title 'solve'\n"
        ),
        Command::Speedup => format!(
            "{head}set xlabel 'threads'\nset ylabel 'speedup'\nplot '{csv}' using 2:(strcol(3) eq 'build' ? $5 : 1/0) with linespoints title 'build', '' using 2:(strcol(3) eq 'solve' ? $5 : 1/0) with linespoints title 'solve'\n"
        ),
        _ => format!("{head}# no plot for this command\n"),
    }
}

/// Writes `text` to `path`, or stdout when `None`.
pub fn emit(path: Option<&Path>, text: &str) -> io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
