//! The `scr` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use scr_core::association;
use scr_core::dashf::{Algorithm, RunOptions};
use scr_core::model;
use scr_core::scenario::{generate, ScenarioConfig};

use crate::experiment::{self, ExperimentSpec, RowStatus, SweepRow};
use crate::files::{self, ConfigFile, ScenarioFile, SolutionFile};
use crate::{report, svg, ToolError, WallClock, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "scr", version, about = "Service-cost ratio optimizer for edge adapter training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a scenario from a config (the built-in default if none is given).
    Generate {
        /// Config file (`kind: "config"`).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Scenario file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one algorithm; writes solution.json and trace.csv.
    Solve {
        scenario: PathBuf,
        #[arg(long, default_value = "dashf")]
        algorithm: Algorithm,
        #[command(flatten)]
        run: RunArgs,
        /// Write 0 to the wall_ms column so reruns are byte-identical.
        #[arg(long)]
        no_timing: bool,
        /// Also write sdp.txt, the association relaxation at the returned allocation.
        #[arg(long)]
        dump_sdp: bool,
    },
    /// Run the five compared algorithms; writes compare.csv and compare.svg.
    Compare {
        scenario: PathBuf,
        /// Restrict to these algorithms (repeatable).
        #[arg(long)]
        algorithm: Vec<Algorithm>,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Run an experiment spec; writes sweep.csv, sweep.svg and points/.
    Sweep {
        spec: PathBuf,
        /// Replaces the spec's seeds (repeatable).
        #[arg(long)]
        seed: Vec<u64>,
        /// Replaces the spec's algorithms (repeatable).
        #[arg(long)]
        algorithm: Vec<Algorithm>,
        /// Replaces the spec's epsilon.
        #[arg(long, allow_negative_numbers = true)]
        epsilon: Option<f64>,
        /// Output directory; defaults to the spec's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 uses one per core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Relative ratio gain that ends the outer loop.
    #[arg(long, default_value_t = 1e-3, allow_negative_numbers = true)]
    pub epsilon: f64,
    /// Cap on outer iterations; hitting it exits with code 4.
    #[arg(long, default_value_t = 30)]
    pub max_outer: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

impl RunArgs {
    fn options(&self) -> Result<RunOptions, ToolError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(ToolError::Config(format!("--epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_outer == 0 {
            return Err(ToolError::Config("--max-outer must be at least 1".into()));
        }
        Ok(RunOptions { epsilon: self.epsilon, max_outer: self.max_outer, ..RunOptions::default() })
    }
}

/// Parses and runs; returns the process exit code. Errors go to stderr.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: Command) -> Result<(), ToolError> {
    match cmd {
        Command::Generate { config, seed, out } => cmd_generate(config.as_deref(), seed, &out),
        Command::Solve { scenario, algorithm, run, no_timing, dump_sdp } => cmd_solve(&scenario, algorithm, &run, !no_timing, dump_sdp),
        Command::Compare { scenario, algorithm, run, jobs } => {
            let algs = if algorithm.is_empty() { Algorithm::COMPARED.to_vec() } else { algorithm };
            with_pool(jobs, || cmd_compare(&scenario, &algs, &run))?
        }
        Command::Sweep { spec, seed, algorithm, epsilon, out, jobs } => with_pool(jobs, || cmd_sweep(&spec, seed, algorithm, epsilon, out))?,
    }
}

fn with_pool<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R, ToolError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ToolError::Config(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(f))
}

pub fn cmd_generate(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<(), ToolError> {
    let mut cfg = match config {
        Some(p) => files::read::<ConfigFile>(p, "config")?.config,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let scn = generate(&cfg).map_err(|e| ToolError::Config(format!("config rejected: {e}")))?;
    let file = ScenarioFile::new(scn, None);
    files::write_atomic(out, files::to_json(&file).as_bytes())?;
    println!("wrote {} (N={}, M={}, seed {}, sha256 {})", out.display(), file.scenario.n_users(), file.scenario.n_servers(), cfg.seed, file.scenario_hash);
    Ok(())
}

pub fn cmd_solve(path: &Path, algorithm: Algorithm, run: &RunArgs, timing: bool, dump_sdp: bool) -> Result<(), ToolError> {
    let opts = run.options()?;
    let file = files::load_scenario(path)?;
    let scn = &file.scenario;
    let clock = WallClock::start();
    let r = experiment::run_one(scn, algorithm, &opts, &clock)?;
    let violations = model::check_feasibility(scn, &r.solution.allocation);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| format!("{} #{} by {:e}", v.kind, v.index, v.excess)).collect();
        return Err(ToolError::Core(scr_core::Error::Infeasible(format!("returned allocation violates {}", list.join(", ")))));
    }
    let hash = &files::scenario_hash(scn);
    let sol = SolutionFile::new(scn, &r.solution, &r.breakdown, opts.epsilon);
    files::write_atomic(&run.out.join("solution.json"), files::to_json(&sol).as_bytes())?;
    files::write_atomic(&run.out.join("trace.csv"), &report::trace_csv(hash, &r.trace, timing))?;
    if dump_sdp {
        let c = association::coeffs(scn, &r.solution.allocation.resources, r.solution.scr)?;
        let sdr = association::build_sdr(&c, &r.solution.allocation.resources, scn);
        let mut text = format!("# scr {} scenario_sha256={hash} y={}\n", files::TOOL_VERSION, report::num(r.solution.scr));
        sdr.program.write_text(&mut text).expect("string write");
        files::write_atomic(&run.out.join("sdp.txt"), text.as_bytes())?;
    }
    println!(
        "{}: scr {} after {} iterations (T {} s, E {} J, V {}); wrote {}",
        algorithm,
        report::num(r.solution.scr),
        r.solution.iterations,
        report::num(r.breakdown.total_delay),
        report::num(r.breakdown.total_energy),
        report::num(r.breakdown.total_score),
        run.out.display()
    );
    if !r.solution.converged {
        return Err(ToolError::NotConverged { algorithm: algorithm.to_string(), iterations: r.solution.iterations, note: r.solution.note });
    }
    Ok(())
}

pub fn cmd_compare(path: &Path, algorithms: &[Algorithm], run: &RunArgs) -> Result<(), ToolError> {
    let opts = run.options()?;
    let file = files::load_scenario(path)?;
    let scn = &file.scenario;
    let results = experiment::run_many(scn, algorithms, &opts);
    let mut rows = Vec::new();
    let mut bars = Vec::new();
    let mut unconverged = None;
    for (alg, r) in algorithms.iter().zip(results) {
        let r = r.map_err(|e| {
            eprintln!("{alg} failed");
            ToolError::Core(e)
        })?;
        if !r.solution.converged && unconverged.is_none() {
            unconverged = Some(ToolError::NotConverged { algorithm: alg.to_string(), iterations: r.solution.iterations, note: r.solution.note.clone() });
        }
        rows.push(report::compare_row(&r.solution, &r.breakdown));
        bars.push((alg.name().to_uppercase(), r.solution.scr));
        println!("{alg}: scr {}", report::num(r.solution.scr));
    }
    let hash = &files::scenario_hash(scn);
    files::write_atomic(&run.out.join("compare.csv"), &report::compare_csv(hash, &rows))?;
    let chart = svg::bar_chart("Service-cost ratio by algorithm", "SCR", &bars, &format!("scenario_sha256={hash}"));
    files::write_atomic(&run.out.join("compare.svg"), chart.as_bytes())?;
    println!("wrote {}", run.out.display());
    unconverged.map_or(Ok(()), Err)
}

pub fn cmd_sweep(path: &Path, seeds: Vec<u64>, algorithms: Vec<Algorithm>, epsilon: Option<f64>, out: Option<PathBuf>) -> Result<(), ToolError> {
    let (mut spec, base) = ExperimentSpec::load(path)?;
    if !seeds.is_empty() {
        spec.seeds = seeds;
    }
    if !algorithms.is_empty() {
        spec.algorithms = algorithms;
    }
    if let Some(e) = epsilon {
        spec.epsilon = e;
    }
    spec.validate()?;
    let out = out
        .or_else(|| spec.output_dir.as_ref().map(|d| path.parent().unwrap_or(Path::new(".")).join(d)))
        .ok_or_else(|| ToolError::Config("no output directory: pass --out or set output_dir".into()))?;
    let hash = experiment::spec_hash(&spec, &base);
    let points = spec.points(&base);
    let write_errors = std::sync::Mutex::new(Vec::new());
    let rows = experiment::run_sweep(&spec, &base, |p, rows| {
        let name = out.join("points").join(format!("point_{:03}.csv", p.index));
        if let Err(e) = files::write_atomic(&name, &experiment::sweep_csv(&hash, rows)) {
            write_errors.lock().unwrap().push(e);
        }
    });
    if let Some(e) = write_errors.into_inner().unwrap().into_iter().next() {
        return Err(e);
    }
    files::write_atomic(&out.join("sweep.csv"), &experiment::sweep_csv(&hash, &rows))?;
    let ticks: Vec<String> = points.iter().map(|p| p.label.clone()).collect();
    let series: Vec<(String, Vec<Option<f64>>)> = spec
        .algorithms
        .iter()
        .map(|&a| (a.name().to_uppercase(), points.iter().map(|p| experiment::means(&rows, a, p.index).map(|m| m[0])).collect()))
        .collect();
    let x_label = match spec.sweep {
        experiment::SweepAxis::None => "scenario",
        experiment::SweepAxis::BandwidthHz(_) => "server bandwidth",
        experiment::SweepAxis::Weights(_) => "(delay weight, energy weight)",
    };
    let chart = svg::line_chart("Mean service-cost ratio", x_label, "SCR", &ticks, &series, &format!("spec_sha256={hash}"));
    files::write_atomic(&out.join("sweep.svg"), chart.as_bytes())?;
    summarize(&rows, &out)
}

fn summarize(rows: &[SweepRow], out: &Path) -> Result<(), ToolError> {
    let ok = rows.iter().filter(|r| r.status == RowStatus::Ok).count();
    println!("{ok} of {} runs succeeded; wrote {}", rows.len(), out.display());
    for r in rows.iter().filter(|r| r.status != RowStatus::Ok) {
        eprintln!("{} point {} seed {}: {} {}", r.algorithm, r.point, r.seed, r.status.name(), r.message);
    }
    if ok > 0 {
        return Ok(());
    }
    let first = rows.iter().find(|r| r.status != RowStatus::Ok);
    Err(match first {
        Some(r) if r.status == RowStatus::NotConverged => ToolError::NotConverged { algorithm: r.algorithm.to_string(), iterations: r.values.as_ref().map_or(0, |v| v.iterations), note: Some(r.message.clone()) },
        Some(r) => match r.failure_code {
            Some(crate::EXIT_INFEASIBLE) => ToolError::Core(scr_core::Error::Infeasible(r.message.clone())),
            Some(crate::EXIT_NONCONVERGENCE) => ToolError::NotConverged { algorithm: r.algorithm.to_string(), iterations: 0, note: Some(r.message.clone()) },
            _ => ToolError::Config(format!("every run failed; first: {}", r.message)),
        },
        None => ToolError::Config("sweep produced no runs".into()),
    })
}
