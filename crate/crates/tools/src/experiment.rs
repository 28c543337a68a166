//! Experiment specs and the parallel sweep runner.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "kind": "experiment",
//!   "scenario": { "config": { ...ScenarioConfig... } },
//!   "algorithms": ["dashf", "rucaa", "gucaa", "aauco", "gucro"],
//!   "sweep": { "axis": "bandwidth_hz", "values": [1e7, 2e7] },
//!   "seeds": [0, 1, 2, 3, 4],
//!   "epsilon": 0.001
//! }
//! ```
//!
//! `scenario` is either `{"config": {...}}` or `{"config_file": "path"}`, the
//! latter resolved against the spec file's directory. `sweep.axis` is one of
//! `none`, `bandwidth_hz` (server bandwidth, Hz) or `weights` (pairs
//! `[weight_delay, weight_energy]`).

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use scr_core::dashf::{self, Algorithm, Clock, NoClock, RunOptions, RunTrace, Solution};
use scr_core::scenario::{generate, ScenarioConfig};
use scr_core::{model, CostBreakdown, Scenario};
use serde::{Deserialize, Serialize};

use crate::files::{self, ConfigFile};
use crate::report::{self, num};
use crate::ToolError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub kind: String,
    pub scenario: ScenarioRef,
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub sweep: SweepAxis,
    pub seeds: Vec<u64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_epsilon() -> f64 {
    RunOptions::default().epsilon
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioRef {
    Config(ScenarioConfig),
    ConfigFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum SweepAxis {
    #[default]
    None,
    BandwidthHz(Vec<f64>),
    Weights(Vec<[f64; 2]>),
}

/// One point of the sweep axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub label: String,
    pub config: ScenarioConfig,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<(Self, ScenarioConfig), ToolError> {
        let spec: Self = files::read(path, "experiment")?;
        spec.validate().map_err(|e| e.in_file(path))?;
        let base = match &spec.scenario {
            ScenarioRef::Config(c) => c.clone(),
            ScenarioRef::ConfigFile(p) => {
                let p = if p.is_relative() { path.parent().unwrap_or(Path::new(".")).join(p) } else { p.clone() };
                files::read::<ConfigFile>(&p, "config")?.config
            }
        };
        Ok((spec, base))
    }

    pub fn validate(&self) -> Result<(), ToolError> {
        if self.algorithms.is_empty() {
            return Err(ToolError::schema("algorithms", "at least one algorithm is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(ToolError::schema("seeds", "at least one seed is required".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(ToolError::schema("epsilon", format!("must be positive, got {}", self.epsilon)));
        }
        if self.point_count() == 0 {
            return Err(ToolError::schema("sweep.values", "empty sweep".into()));
        }
        match &self.sweep {
            SweepAxis::None => {}
            SweepAxis::BandwidthHz(v) => {
                if let Some(i) = v.iter().position(|b| !(b.is_finite() && *b > 0.0)) {
                    return Err(ToolError::schema(&format!("sweep.values[{i}]"), "bandwidth must be positive and finite".into()));
                }
            }
            SweepAxis::Weights(v) => {
                if let Some(i) = v.iter().position(|w| !w.iter().all(|x| x.is_finite() && *x >= 0.0) || w[0] + w[1] <= 0.0) {
                    return Err(ToolError::schema(&format!("sweep.values[{i}]"), "weights must be nonnegative, finite and not both zero".into()));
                }
            }
        }
        Ok(())
    }

    fn point_count(&self) -> usize {
        match &self.sweep {
            SweepAxis::None => 1,
            SweepAxis::BandwidthHz(v) => v.len(),
            SweepAxis::Weights(v) => v.len(),
        }
    }

    pub fn points(&self, base: &ScenarioConfig) -> Vec<SweepPoint> {
        match &self.sweep {
            SweepAxis::None => vec![SweepPoint { index: 0, label: "base".into(), config: base.clone() }],
            SweepAxis::BandwidthHz(v) => v
                .iter()
                .enumerate()
                .map(|(index, &b)| SweepPoint {
                    index,
                    label: format!("{} MHz", num(b / 1e6)),
                    config: ScenarioConfig { server_bandwidth_hz: b, ..base.clone() },
                })
                .collect(),
            SweepAxis::Weights(v) => v
                .iter()
                .enumerate()
                .map(|(index, w)| SweepPoint {
                    index,
                    label: format!("({}, {})", num(w[0]), num(w[1])),
                    config: ScenarioConfig { weight_delay: w[0], weight_energy: w[1], ..base.clone() },
                })
                .collect(),
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions { epsilon: self.epsilon, ..RunOptions::default() }
    }
}

/// Result of one algorithm on one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub solution: Solution,
    pub trace: RunTrace,
    pub breakdown: CostBreakdown,
}

pub fn run_one(scn: &Scenario, alg: Algorithm, opts: &RunOptions, clock: &dyn Clock) -> Result<RunResult, scr_core::Error> {
    let (solution, trace) = dashf::solve(alg, scn, opts, clock)?;
    let breakdown = model::evaluate(scn, &solution.allocation)?;
    Ok(RunResult { solution, trace, breakdown })
}

/// Runs the algorithms concurrently in the current rayon pool; results keep
/// the input order.
pub fn run_many(scn: &Scenario, algorithms: &[Algorithm], opts: &RunOptions) -> Vec<Result<RunResult, scr_core::Error>> {
    algorithms.par_iter().map(|&alg| run_one(scn, alg, opts, &NoClock)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    NotConverged,
    Error,
}

impl RowStatus {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::NotConverged => "not_converged",
            Self::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowValues {
    pub scr: f64,
    pub total_delay: f64,
    pub total_energy: f64,
    pub total_score: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    pub point: usize,
    pub config: ScenarioConfig,
    pub seed: u64,
    pub scenario_hash: String,
    pub status: RowStatus,
    pub message: String,
    pub values: Option<RowValues>,
    /// Exit code of the failure, for rows that failed.
    pub failure_code: Option<i32>,
}

fn rows_for(point: &SweepPoint, seed: u64, algorithms: &[Algorithm], opts: &RunOptions) -> Vec<SweepRow> {
    let cfg = point.config.clone().with_seed(seed);
    let row = |alg, hash: &str, status, message: String, values, failure_code| SweepRow {
        algorithm: alg,
        point: point.index,
        config: cfg.clone(),
        seed,
        scenario_hash: hash.to_string(),
        status,
        message,
        values,
        failure_code,
    };
    let scn = match generate(&cfg) {
        Ok(s) => s,
        Err(e) => {
            let code = ToolError::Core(e.clone()).exit_code();
            return algorithms.iter().map(|&a| row(a, "", RowStatus::Error, e.to_string(), None, Some(code))).collect();
        }
    };
    let hash = files::scenario_hash(&scn);
    algorithms
        .iter()
        .zip(run_many(&scn, algorithms, opts))
        .map(|(&alg, r)| match r {
            Ok(r) => {
                let values = RowValues {
                    scr: r.solution.scr,
                    total_delay: r.breakdown.total_delay,
                    total_energy: r.breakdown.total_energy,
                    total_score: r.breakdown.total_score,
                    iterations: r.solution.iterations,
                };
                if r.solution.converged {
                    row(alg, &hash, RowStatus::Ok, String::new(), Some(values), None)
                } else {
                    let msg = r.solution.note.clone().unwrap_or_else(|| "iteration cap reached".into());
                    row(alg, &hash, RowStatus::NotConverged, msg, Some(values), Some(crate::EXIT_NONCONVERGENCE))
                }
            }
            Err(e) => {
                let code = ToolError::Core(e.clone()).exit_code();
                row(alg, &hash, RowStatus::Error, e.to_string(), None, Some(code))
            }
        })
        .collect()
}

/// Runs every (point, seed, algorithm) combination, each on a freshly
/// generated scenario. `on_point` sees the rows of a point once they are all
/// done. Rows come back ordered by point, seed, then algorithm list order.
pub fn run_sweep<F>(spec: &ExperimentSpec, base: &ScenarioConfig, on_point: F) -> Vec<SweepRow>
where
    F: Fn(&SweepPoint, &[SweepRow]) + Sync,
{
    let opts = spec.run_options();
    let points = spec.points(base);
    let per_point: Vec<Vec<SweepRow>> = points
        .par_iter()
        .map(|p| {
            let rows: Vec<SweepRow> = spec.seeds.par_iter().flat_map_iter(|&seed| rows_for(p, seed, &spec.algorithms, &opts)).collect();
            on_point(p, &rows);
            rows
        })
        .collect();
    per_point.into_iter().flatten().collect()
}

pub const SWEEP_COLUMNS: [&str; 18] = [
    "algorithm",
    "point",
    "b_max_hz",
    "weight_delay",
    "weight_energy",
    "seed",
    "scenario_hash",
    "status",
    "message",
    "scr",
    "T_total",
    "E_total",
    "V",
    "iterations",
    "mean_scr",
    "mean_T_total",
    "mean_E_total",
    "mean_V",
];

/// Means over the successful seeds of each (algorithm, point).
pub fn means(rows: &[SweepRow], algorithm: Algorithm, point: usize) -> Option<[f64; 4]> {
    let ok: Vec<&RowValues> = rows
        .iter()
        .filter(|r| r.algorithm == algorithm && r.point == point && r.status == RowStatus::Ok)
        .filter_map(|r| r.values.as_ref())
        .collect();
    if ok.is_empty() {
        return None;
    }
    let k = ok.len() as f64;
    let sum = |f: fn(&RowValues) -> f64| ok.iter().map(|v| f(v)).sum::<f64>() / k;
    Some([sum(|v| v.scr), sum(|v| v.total_delay), sum(|v| v.total_energy), sum(|v| v.total_score)])
}

/// Rows of `subset` with mean columns computed over `subset` itself.
pub fn sweep_csv(spec_hash: &str, subset: &[SweepRow]) -> Vec<u8> {
    let records: Vec<Vec<String>> = subset
        .iter()
        .map(|r| {
            let mut rec = vec![
                r.algorithm.name().to_string(),
                r.point.to_string(),
                num(r.config.server_bandwidth_hz),
                num(r.config.weight_delay),
                num(r.config.weight_energy),
                r.seed.to_string(),
                r.scenario_hash.clone(),
                r.status.name().to_string(),
                r.message.clone(),
            ];
            match &r.values {
                Some(v) => rec.extend([num(v.scr), num(v.total_delay), num(v.total_energy), num(v.total_score), v.iterations.to_string()]),
                None => rec.extend(std::iter::repeat_n(String::new(), 5)),
            }
            match means(subset, r.algorithm, r.point) {
                Some(m) => rec.extend(m.map(num)),
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
            rec
        })
        .collect();
    report::write_csv(&report::header_line("spec_sha256", spec_hash), &SWEEP_COLUMNS, &records)
}

pub fn spec_hash(spec: &ExperimentSpec, base: &ScenarioConfig) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(spec).expect("spec serializes"));
    h.update(serde_json::to_vec(base).expect("config serializes"));
    hex::encode(h.finalize())
}
