use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use hps::geometry::build_uniform_tree;
use hps::harness::{self, Command, PlanSource, ProblemKind, RunConfig};
use hps::linalg::C64;

#[derive(Parser)]
#[command(
    name = "hps",
    version,
    about = "Hierarchical direct solver for 2D Helmholtz impedance problems"
)]
struct Cli {
    /// Write a calibration table to --out and exit.
    #[arg(long, global = true)]
    calibrate: bool,
    #[command(subcommand)]
    command: Option<Cmd>,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Cmd {
    /// Max error against the manufactured solution for each level count.
    Convergence,
    /// Build and solve timings with fitted log-log slopes.
    Scaling,
    /// Serial baseline then planned runs for each thread budget.
    Speedup {
        /// Comma-separated thread budgets.
        #[arg(long, value_delimiter = ',')]
        thread_list: Vec<usize>,
    },
    /// Time representative actions and write a calibration table.
    Calibrate,
    /// One build (or checkpoint load) and one solve; writes x,y,re,im.
    SolveOnce,
    /// Print the box tree for the deepest level count.
    Tree,
}

#[derive(Args)]
struct Common {
    /// Level range A:B, or a single count.
    #[arg(long, global = true, default_value = "3:7", value_parser = parse_levels)]
    levels: (usize, usize),
    /// Chebyshev points per leaf side.
    #[arg(long = "nc", global = true, default_value_t = 16)]
    n_c: usize,
    #[arg(long, global = true, default_value_t = 16.0)]
    kappa: f64,
    /// Real part of the impedance parameter; defaults to kappa.
    #[arg(long, global = true)]
    eta_real: Option<f64>,
    #[arg(long, global = true, default_value_t = 0.0)]
    eta_imag: f64,
    /// Thread budget.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// auto, serial or file=PATH.
    #[arg(long, global = true, default_value = "serial")]
    plan: PlanSource,
    /// Calibration table to plan from; same as --plan file=PATH.
    #[arg(long, global = true)]
    plan_from: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0x5eed)]
    seed: u64,
    /// benchmark, plane-wave or zero.
    #[arg(long, global = true, default_value = "benchmark")]
    problem: ProblemKind,
    /// Timed repetitions per run; the fastest is reported.
    #[arg(long, global = true, default_value_t = 1)]
    repeats: usize,
    /// Timed repetitions per calibration sample.
    #[arg(long, global = true, default_value_t = 5)]
    calibration_reps: usize,
    /// Minimum wall time per calibration sample, in milliseconds.
    #[arg(long, global = true, default_value_t = 10)]
    calibration_ms: u64,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Write a gnuplot script for the CSV to this path.
    #[arg(long, global = true)]
    gnuplot: Option<PathBuf>,
}

fn parse_levels(s: &str) -> Result<(usize, usize), String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    match s.split_once(':') {
        Some((a, b)) => Ok((num(a)?, num(b)?)),
        None => num(s).map(|v| (v, v)),
    }
}

fn config(cli: &Cli) -> RunConfig {
    let (command, thread_list) = match &cli.command {
        _ if cli.calibrate => (Command::Calibrate, Vec::new()),
        None | Some(Cmd::Convergence) => (Command::Convergence, Vec::new()),
        Some(Cmd::Scaling) => (Command::Scaling, Vec::new()),
        Some(Cmd::Speedup { thread_list }) => (Command::Speedup, thread_list.clone()),
        Some(Cmd::Calibrate) => (Command::Calibrate, Vec::new()),
        Some(Cmd::SolveOnce) => (Command::SolveOnce, Vec::new()),
        Some(Cmd::Tree) => (Command::Tree, Vec::new()),
    };
    let c = &cli.common;
    let mut cfg = RunConfig::new(command);
    cfg.levels = c.levels;
    cfg.n_c = c.n_c;
    cfg.kappa = c.kappa;
    cfg.eta = c
        .eta_real
        .map(|re| C64::new(re, c.eta_imag))
        .or((c.eta_imag != 0.0).then(|| C64::new(c.kappa, c.eta_imag)));
    cfg.threads = c.threads;
    cfg.plan = match &c.plan_from {
        Some(p) => PlanSource::File(p.clone()),
        None => c.plan.clone(),
    };
    cfg.seed = c.seed;
    cfg.problem = c.problem;
    cfg.repeats = c.repeats;
    cfg.thread_list = thread_list;
    cfg.out = c.out.clone();
    cfg.checkpoint = c.checkpoint.clone();
    cfg.gnuplot = c.gnuplot.clone();
    cfg.calibration.repetitions = c.calibration_reps;
    cfg.calibration.min_sample = Duration::from_millis(c.calibration_ms);
    cfg.calibration.seed = c.seed;
    cfg
}

fn with_header(cfg: &RunConfig, csv: &str) -> String {
    format!("# {} hash={}\n{csv}", cfg.resolved(), cfg.hash())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run(cfg: &RunConfig) -> Result<(), Box<dyn std::error::Error>> {
    cfg.validate()?;
    eprintln!("config {} hash={}", cfg.resolved(), cfg.hash());
    let out = cfg.out.as_deref();
    match cfg.command {
        Command::Convergence => {
            let rows = harness::run_convergence(cfg)?;
            harness::emit(out, &with_header(cfg, &harness::convergence_csv(cfg, &rows)))?;
        }
        Command::Scaling => {
            let report = harness::run_scaling(cfg)?;
            harness::emit(out, &with_header(cfg, &harness::scaling_csv(cfg, &report)))?;
            let levels = with_header(cfg, &harness::level_timings_csv(cfg, &report.runs));
            match out {
                Some(p) => harness::emit(Some(&sibling(p, ".levels.csv")), &levels)?,
                None => harness::emit(None, &levels)?,
            }
            eprintln!(
                "build slope {:.3}, solve slope {:.3}",
                report.build_slope, report.solve_slope
            );
            if !report.root_heavy() {
                log::warn!("per-level build time does not peak at the top merge level");
            }
        }
        Command::Speedup => {
            let rows = harness::run_speedup(cfg)?;
            harness::emit(out, &with_header(cfg, &harness::speedup_csv(cfg, &rows)))?;
        }
        Command::Calibrate => {
            let table = harness::run_calibrate(cfg)?;
            harness::emit(
                out,
                &format!("# {} hash={}\n{}", cfg.resolved(), cfg.hash(), table.to_text()),
            )?;
        }
        Command::SolveOnce => {
            let spec = cfg.problem_spec();
            let exact = cfg.manufactured();
            let f = exact.as_ref().map(|m| move |x, y| m.exact(x, y));
            let r = harness::solve_once(cfg, &spec, f.as_ref().map(|g| g as &dyn Fn(f64, f64) -> C64), out)?;
            eprintln!(
                "{} N={} setup {:.4}s solve {:.4}s e_inf {}",
                if r.loaded_checkpoint {
                    "loaded checkpoint"
                } else {
                    "built"
                },
                r.n_points,
                r.build_seconds,
                r.solve_seconds,
                r.e_inf.map_or("n/a".into(), |e| format!("{e:e}"))
            );
        }
        Command::Tree => {
            let tree = build_uniform_tree(cfg.problem_spec().domain, cfg.levels.1, cfg.n_c)?;
            harness::emit(out, &tree.describe())?;
        }
    }
    if let (Some(script), Some(csv)) = (&cfg.gnuplot, out) {
        harness::emit(Some(script), &harness::gnuplot_script(cfg.command, csv))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&config(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
