//! Dinkelbach outer loop around the association and resource blocks, plus
//! the four reference strategies.
//!
//! Every strategy runs the same loop: fix `y` at the current ratio, improve
//! `V - y (w_t T + w_e E)` with the strategy's blocks, recompute `y`, stop
//! once `y_new / y - 1 <= epsilon`. The best allocation seen is returned.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::association::{self, Part1Outcome};
use crate::matrix::Matrix;
use crate::model::{self, Allocation, Resources, Scenario};
use crate::oracle;
use crate::resources::{self, Part2Settings, ResourceVars};
use crate::scenario::RngSpec;
use crate::sdpsolver::SdpSettings;
use crate::{Error, Result};

/// Offset added to the scenario seed for the random association stream.
pub const RANDOM_ASSOCIATION_STREAM: u64 = 0x5255_4341;

/// Tolerance on `y` decreases before a run is flagged nonmonotone.
pub const MONOTONE_TOL: f64 = 1e-8;

/// Millisecond clock used for the trace; the core crate has none.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// Always reports zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum Algorithm {
    Dashf,
    Rucaa,
    Gucaa,
    Aauco,
    Gucro,
    /// The full loop with exhaustive association search in place of the relaxation.
    Oracle,
}

impl Algorithm {
    pub const ALL: [Self; 6] = [Self::Dashf, Self::Rucaa, Self::Gucaa, Self::Aauco, Self::Gucro, Self::Oracle];
    /// The five strategies compared on full-size scenarios.
    pub const COMPARED: [Self; 5] = [Self::Dashf, Self::Rucaa, Self::Gucaa, Self::Aauco, Self::Gucro];

    pub fn name(self) -> &'static str {
        match self {
            Self::Dashf => "dashf",
            Self::Rucaa => "rucaa",
            Self::Gucaa => "gucaa",
            Self::Aauco => "aauco",
            Self::Gucro => "gucro",
            Self::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub epsilon: f64,
    pub max_outer: usize,
    pub sdp: SdpSettings,
    pub part2: Part2Settings,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { epsilon: 1e-3, max_outer: 30, sdp: SdpSettings::default(), part2: Part2Settings::default() }
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRow {
    pub iter: usize,
    /// Ratio the iteration was run with.
    pub y: f64,
    /// Ratio of the allocation the iteration produced.
    pub scr: f64,
    /// `V - y D` after the association step.
    pub obj_part1: f64,
    /// `V - y D` after the resource step.
    pub obj_part2: f64,
    pub total_delay: f64,
    pub total_energy: f64,
    pub total_score: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
}

impl RunTrace {
    /// `[y0, y1, ...]`: the ratio entering each iteration and the final one.
    pub fn y_sequence(&self) -> Vec<f64> {
        let mut ys: Vec<f64> = self.rows.iter().map(|r| r.y).collect();
        if let Some(last) = self.rows.last() {
            ys.push(last.scr);
        }
        ys
    }

    pub fn is_monotone(&self, tol: f64) -> bool {
        self.y_sequence().windows(2).all(|w| w[1] >= w[0] - tol * w[0].abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Solution {
    pub algorithm: Algorithm,
    pub allocation: Allocation,
    pub scr: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Why the run stopped early, if it did.
    pub note: Option<String>,
}

/// Start point of the main loop: uniform per-pair shares `cap / N` on every
/// pair, users at their caps, `phi = 0.5`, cyclic association.
pub fn initialize(scn: &Scenario) -> Result<Allocation> {
    scn.validate()?;
    let (n_users, n_servers) = (scn.n_users(), scn.n_servers());
    let share = n_users as f64;
    let mut r = Resources::zeros(n_users, n_servers);
    for (m, s) in scn.servers.iter().enumerate() {
        for n in 0..n_users {
            r.bandwidth[(n, m)] = s.bandwidth / share;
            r.server_power[(n, m)] = s.max_power / share;
            r.server_speed[(n, m)] = s.max_speed / share;
        }
    }
    for (n, u) in scn.users.iter().enumerate() {
        r.user_power[n] = u.max_power;
        r.user_speed[n] = u.max_speed;
    }
    let choice: Vec<usize> = (0..n_users).map(|n| n % n_servers).collect();
    tighten(scn, model::association_from_choice(n_servers, &choice), alloc::vec![0.5; n_users], r)
}

/// Allocation with the delay bound at the implied maximum delay.
fn tighten(scn: &Scenario, x: Matrix<f64>, phi: Vec<f64>, resources: Resources) -> Result<Allocation> {
    let mut a = Allocation { x, phi, resources, delay_bound: 0.0 };
    a.delay_bound = model::evaluate(scn, &a)?.total_delay;
    Ok(a)
}

/// Random association from the seed-offset stream.
pub fn random_association(scn: &Scenario) -> Matrix<f64> {
    let mut rng = RngSpec::new(scn.seed.wrapping_add(RANDOM_ASSOCIATION_STREAM)).stream();
    let choice: Vec<usize> = (0..scn.n_users()).map(|_| rng.below(scn.n_servers())).collect();
    model::association_from_choice(scn.n_servers(), &choice)
}

/// Users in index order join the server with the fewest users so far; ties
/// go to the higher channel gain, then the lower index.
pub fn greedy_association(scn: &Scenario) -> Matrix<f64> {
    let mut load = alloc::vec![0usize; scn.n_servers()];
    let mut choice = Vec::with_capacity(scn.n_users());
    for n in 0..scn.n_users() {
        let mut best = 0;
        for m in 1..scn.n_servers() {
            if load[m] < load[best] || (load[m] == load[best] && scn.gain[(n, m)] > scn.gain[(n, best)]) {
                best = m;
            }
        }
        load[best] += 1;
        choice.push(best);
    }
    model::association_from_choice(scn.n_servers(), &choice)
}

/// Equal split of each server's caps among its users and `phi = 0.5`.
fn equal_split_start(scn: &Scenario, x: Matrix<f64>) -> Result<Allocation> {
    let res = Resources::equal_split(scn, &x);
    tighten(scn, x, alloc::vec![0.5; scn.n_users()], res)
}

/// Zeroes the shares of unconnected pairs.
fn prune(a: &mut Allocation) {
    for n in 0..a.x.rows() {
        for m in 0..a.x.cols() {
            if a.x[(n, m)] < 0.5 {
                a.resources.bandwidth[(n, m)] = 0.0;
                a.resources.server_power[(n, m)] = 0.0;
                a.resources.server_speed[(n, m)] = 0.0;
            }
        }
    }
}

fn dinkelbach(scn: &Scenario, a: &Allocation, y: f64) -> Result<(f64, model::CostBreakdown)> {
    let bd = model::evaluate(scn, a)?;
    Ok((bd.dinkelbach_value(y, scn.weight_delay, scn.weight_energy), bd))
}

enum AssocStep {
    Relaxation,
    Exhaustive,
    /// Split refit only.
    Keep,
    /// Split fixed.
    None,
}

enum ResourceStep {
    Optimize,
    EqualSplit,
}

struct Strategy {
    algorithm: Algorithm,
    assoc: AssocStep,
    resources: ResourceStep,
    /// Resources for the association step when they are not the current ones.
    assoc_resources: Option<Resources>,
    /// Also run each iteration from the equal split of the current
    /// association and keep the better result.
    restart: bool,
    /// Further start for each iteration: these shares with the current
    /// association and split.
    restart_shares: Option<Resources>,
}

fn part1(
    scn: &Scenario,
    s: &Strategy,
    a: &Allocation,
    y: f64,
    opts: &RunOptions,
) -> Result<(Matrix<f64>, Vec<f64>)> {
    let res = s.assoc_resources.as_ref().unwrap_or(&a.resources);
    match s.assoc {
        AssocStep::Relaxation => {
            let Part1Outcome { x, phi, .. } = association::solve_part1(scn, res, Some(&a.x), y, &opts.sdp)?;
            Ok((x, phi))
        }
        AssocStep::Exhaustive => {
            let best = oracle::brute_force_association(scn, res, y, None)?;
            Ok((best.x, best.phi))
        }
        AssocStep::Keep => {
            let c = association::coeffs(scn, res, y)?;
            Ok((a.x.clone(), association::refit_phi(&a.x, &c)?.phi))
        }
        AssocStep::None => Ok((a.x.clone(), a.phi.clone())),
    }
}

/// Resources for a new association: the current ones when every connected
/// pair has a share and the caps hold, else the equal split. Shares of
/// unconnected pairs do not enter the objective; they are kept so the next
/// association step can price a move.
fn carry_resources(scn: &Scenario, current: &Resources, x: &Matrix<f64>) -> Resources {
    let r = current.clone();
    let served = (0..scn.n_users()).all(|n| {
        (0..scn.n_servers()).all(|m| {
            x[(n, m)] < 0.5 || (r.bandwidth[(n, m)] > 0.0 && r.server_power[(n, m)] > 0.0 && r.server_speed[(n, m)] > 0.0)
        })
    });
    if served && association::caps_respected(scn, &r, x) {
        r
    } else {
        Resources::equal_split(scn, x)
    }
}

fn part2(
    scn: &Scenario,
    s: &Strategy,
    x: &Matrix<f64>,
    phi: &[f64],
    current: &Resources,
    y: f64,
    opts: &RunOptions,
) -> Result<Resources> {
    let split = Resources::equal_split(scn, x);
    match s.resources {
        ResourceStep::EqualSplit => Ok(split),
        ResourceStep::Optimize => {
            let carried = carry_resources(scn, current, x);
            let value = |r: &Resources| {
                tighten(scn, x.clone(), phi.to_vec(), r.clone())
                    .and_then(|a| dinkelbach(scn, &a, y))
                    .map(|(v, _)| v)
                    .unwrap_or(f64::NEG_INFINITY)
            };
            let start = if value(&carried) >= value(&split) { carried } else { split };
            let start = ResourceVars { resources: start, delay_bound: 0.0 };
            let opt = resources::solve_part2(scn, x, phi, y, &start, &opts.part2)?.vars.resources;
            let mut merged = start.resources;
            for n in 0..scn.n_users() {
                merged.user_power[n] = opt.user_power[n];
                merged.user_speed[n] = opt.user_speed[n];
                for m in (0..scn.n_servers()).filter(|&m| x[(n, m)] > 0.5) {
                    merged.bandwidth[(n, m)] = opt.bandwidth[(n, m)];
                    merged.server_power[(n, m)] = opt.server_power[(n, m)];
                    merged.server_speed[(n, m)] = opt.server_speed[(n, m)];
                }
            }
            Ok(merged)
        }
    }
}

type StepOutcome = Result<(Allocation, f64, f64, model::CostBreakdown)>;

fn keep_better(a: StepOutcome, b: StepOutcome) -> StepOutcome {
    match (a, b) {
        (Ok(a), Ok(b)) => Ok(if b.2 > a.2 { b } else { a }),
        (Err(_), Ok(b)) => Ok(b),
        (a, _) => a,
    }
}

fn run_strategy(scn: &Scenario, s: Strategy, init: Allocation, opts: &RunOptions, clock: &dyn Clock) -> Result<(Solution, RunTrace)> {
    if !(opts.epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {}", opts.epsilon)));
    }
    let mut current = init;
    let mut y = model::scenario_scr(scn, &current)?;
    let mut best = (current.clone(), y);
    let mut trace = RunTrace::default();
    let mut converged = false;
    let mut note = None;
    for iter in 1..=opts.max_outer {
        let t0 = clock.now_ms();
        let step = |base: &Allocation| -> StepOutcome {
            let (x, phi) = part1(scn, &s, base, y, opts)?;
            let carried = carry_resources(scn, &base.resources, &x);
            let after1 = tighten(scn, x.clone(), phi.clone(), carried)?;
            let obj1 = dinkelbach(scn, &after1, y)?.0;
            let res = part2(scn, &s, &x, &phi, &after1.resources, y, opts)?;
            let mut after2 = tighten(scn, x, phi, res)?;
            let (mut obj2, mut bd) = dinkelbach(scn, &after2, y)?;
            if !matches!(s.assoc, AssocStep::None) {
                // The split was fitted to the association-step resources.
                let c = association::coeffs(scn, &after2.resources, y)?;
                let phi = association::refit_phi(&after2.x, &c)?.phi;
                let refit = tighten(scn, after2.x.clone(), phi, after2.resources.clone())?;
                let (v, b) = dinkelbach(scn, &refit, y)?;
                if v >= obj2 || matches!(s.resources, ResourceStep::EqualSplit) {
                    (after2, obj2, bd) = (refit, v, b);
                }
            }
            Ok((after2, obj1, obj2, bd))
        };
        let mut outcome = step(&current);
        if s.restart {
            // Same blocks from the equal split of the current association.
            let fresh = equal_split_start(scn, current.x.clone()).and_then(|mut a| {
                a.phi = current.phi.clone();
                a.delay_bound = model::evaluate(scn, &a)?.total_delay;
                step(&a)
            });
            outcome = keep_better(outcome, fresh);
        }
        if let Some(shares) = &s.restart_shares {
            let fresh = tighten(scn, current.x.clone(), current.phi.clone(), shares.clone()).and_then(|a| step(&a));
            outcome = keep_better(outcome, fresh);
        }
        let (next, obj1, obj2, bd) = match outcome {
            Ok(v) => v,
            Err(e) => {
                note = Some(e.to_string());
                break;
            }
        };
        let y_new = match model::scr(&bd, scn.weight_delay, scn.weight_energy) {
            Ok(v) => v,
            Err(e) => {
                note = Some(e.to_string());
                break;
            }
        };
        trace.rows.push(TraceRow {
            iter,
            y,
            scr: y_new,
            obj_part1: obj1,
            obj_part2: obj2,
            total_delay: bd.total_delay,
            total_energy: bd.total_energy,
            total_score: bd.total_score,
            wall_ms: clock.now_ms() - t0,
        });
        if y_new > best.1 {
            best = (next.clone(), y_new);
        }
        let done = y_new / y - 1.0 <= opts.epsilon;
        current = next;
        y = y_new;
        if done {
            converged = true;
            break;
        }
    }
    let iterations = trace.rows.len();
    if converged && !trace.is_monotone(MONOTONE_TOL) {
        note = Some("ratio decreased between iterations".to_string());
    }
    let (mut allocation, scr) = best;
    prune(&mut allocation);
    Ok((Solution { algorithm: s.algorithm, allocation, scr, converged, iterations, note }, trace))
}

/// The main algorithm: relaxation-based association and split, then
/// optimized resources, in every outer iteration.
pub fn run(scn: &Scenario, opts: &RunOptions, clock: &dyn Clock) -> Result<(Solution, RunTrace)> {
    let init = initialize(scn)?;
    let s = Strategy {
        algorithm: Algorithm::Dashf,
        assoc: AssocStep::Relaxation,
        resources: ResourceStep::Optimize,
        assoc_resources: None,
        restart: true,
        restart_shares: Some(init.resources.clone()),
    };
    run_strategy(scn, s, init, opts, clock)
}

/// Random association, equal split, split ratio refitted.
pub fn run_rucaa(scn: &Scenario, opts: &RunOptions, clock: &dyn Clock) -> Result<(Solution, RunTrace)> {
    let init = equal_split_start(scn, random_association(scn))?;
    let s = Strategy { algorithm: Algorithm::Rucaa, assoc: AssocStep::Keep, resources: ResourceStep::EqualSplit, assoc_resources: None, restart: false, restart_shares: None };
    run_strategy(scn, s, init, opts, clock)
}

/// Greedy least-loaded association, equal split, split ratio refitted.
pub fn run_gucaa(scn: &Scenario, opts: &RunOptions, clock: &dyn Clock) -> Result<(Solution, RunTrace)> {
    let init = equal_split_start(scn, greedy_association(scn))?;
    let s = Strategy { algorithm: Algorithm::Gucaa, assoc: AssocStep::Keep, resources: ResourceStep::EqualSplit, assoc_resources: None, restart: false, restart_shares: None };
    run_strategy(scn, s, init, opts, clock)
}

/// Association and split from the relaxation at the uniform start shares,
/// then the equal split for the chosen association.
pub fn run_aauco(scn: &Scenario, opts: &RunOptions, clock: &dyn Clock) -> Result<(Solution, RunTrace)> {
    let start = initialize(scn)?;
    let shares = start.resources.clone();
    let init = equal_split_start(scn, start.x)?;
    let s = Strategy {
        algorithm: Algorithm::Aauco,
        assoc: AssocStep::Relaxation,
        resources: ResourceStep::EqualSplit,
        assoc_resources: Some(shares),
        restart: false,
        restart_shares: None,
    };
    run_strategy(scn, s, init, opts, clock)
}

/// Greedy association, `phi = 0.5`, optimized resources.
pub fn run_gucro(scn: &Scenario, opts: &RunOptions, clock: &dyn Clock) -> Result<(Solution, RunTrace)> {
    let init = equal_split_start(scn, greedy_association(scn))?;
    let s = Strategy { algorithm: Algorithm::Gucro, assoc: AssocStep::None, resources: ResourceStep::Optimize, assoc_resources: None, restart: false, restart_shares: None };
    run_strategy(scn, s, init, opts, clock)
}

/// The main loop with exhaustive association search. Refused when the
/// search is too large.
pub fn run_oracle(scn: &Scenario, opts: &RunOptions, clock: &dyn Clock) -> Result<(Solution, RunTrace)> {
    oracle::check_enumeration_size(scn.n_users(), scn.n_servers())?;
    let init = initialize(scn)?;
    let s = Strategy {
        algorithm: Algorithm::Oracle,
        assoc: AssocStep::Exhaustive,
        resources: ResourceStep::Optimize,
        assoc_resources: None,
        restart: true,
        restart_shares: Some(init.resources.clone()),
    };
    run_strategy(scn, s, init, opts, clock)
}

pub fn solve(algorithm: Algorithm, scn: &Scenario, opts: &RunOptions, clock: &dyn Clock) -> Result<(Solution, RunTrace)> {
    match algorithm {
        Algorithm::Dashf => run(scn, opts, clock),
        Algorithm::Rucaa => run_rucaa(scn, opts, clock),
        Algorithm::Gucaa => run_gucaa(scn, opts, clock),
        Algorithm::Aauco => run_aauco(scn, opts, clock),
        Algorithm::Gucro => run_gucro(scn, opts, clock),
        Algorithm::Oracle => run_oracle(scn, opts, clock),
    }
}

#[cfg(test)]
mod tests;
