#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! End-to-end acceptance checks. Each test prints one summary line and fails
//! on its own tolerance.

use std::time::Instant;

use scr_core::association::{self, build_sdr, coeffs, hungarian, solve_part1, solve_relaxation};
use scr_core::dashf::{self, Algorithm, RunOptions, MONOTONE_TOL};
use scr_core::model::{self, check_feasibility};
use scr_core::oracle::{self, GridAxis, GridSpec, GridVar};
use scr_core::resources::{direct_objective, solve_part2, transformed_objective, update_z, FreeVars, Part2Problem, Part2Settings, ResourceVars};
use scr_core::scenario::{generate, RngSpec, ScenarioConfig, UniformStream};
use scr_core::sdpsolver::SdpSettings;
use scr_core::{Allocation, Matrix, Resources, Scenario};
use scr_tools::experiment::{self, ExperimentSpec, RowStatus, ScenarioRef, SweepAxis};
use scr_tools::WallClock;

fn scenario(seed: u64, n: usize, m: usize) -> Scenario {
    generate(&ScenarioConfig { n_users: n, n_servers: m, ..ScenarioConfig::default() }.with_seed(seed)).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn verdict(name: &str, pass: bool, detail: String) {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn random_association(rng: &mut UniformStream, n: usize, m: usize) -> Matrix<f64> {
    let choice: Vec<usize> = (0..n).map(|_| rng.below(m)).collect();
    model::association_from_choice(m, &choice)
}

/// Random shares strictly inside the caps, delay bound at the implied delay.
fn random_vars(rng: &mut UniformStream, scn: &Scenario, x: &Matrix<f64>, phi: &[f64]) -> ResourceVars {
    let mut r = Resources::equal_split(scn, x);
    for n in 0..scn.n_users() {
        r.user_power[n] *= rng.uniform(0.05, 0.99);
        r.user_speed[n] *= rng.uniform(0.05, 0.99);
        for m in (0..scn.n_servers()).filter(|&m| x[(n, m)] > 0.5) {
            r.bandwidth[(n, m)] *= rng.uniform(0.05, 0.99);
            r.server_power[(n, m)] *= rng.uniform(0.05, 0.99);
            r.server_speed[(n, m)] *= rng.uniform(0.05, 0.99);
        }
    }
    let a = Allocation { x: x.clone(), phi: phi.to_vec(), resources: r.clone(), delay_bound: 0.0 };
    let t = model::evaluate(scn, &a).unwrap().total_delay;
    ResourceVars { resources: r, delay_bound: t }
}

#[test]
fn fp_transform_is_tight_at_optimal_auxiliaries() {
    let scn = scenario(21, 10, 2);
    let mut rng = RngSpec::new(101).stream();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = random_association(&mut rng, 10, 2);
        let phi: Vec<f64> = (0..10).map(|_| rng.open01()).collect();
        let y = rng.uniform(0.5, 50.0);
        let vars = random_vars(&mut rng, &scn, &x, &phi);
        let z = update_z(&vars, &scn, &x, &phi).unwrap();
        let t = transformed_objective(&vars, &z, &scn, &x, &phi, y).unwrap();
        let d = direct_objective(&vars, &scn, &x, &phi, y).unwrap();
        let a = Allocation { x: x.clone(), phi: phi.clone(), resources: vars.resources.clone(), delay_bound: vars.delay_bound };
        let reference = -oracle::reference_cost(&scn, &a).unwrap().part1_objective(&scn, y);
        let scale = d.abs().max(1.0);
        worst = worst.max((t - d).abs() / scale).max((d - reference).abs() / scale);
    }
    verdict("fp identity", worst <= 1e-9, format!("max relative gap {worst:.2e} over 100 points"));
}

#[test]
fn qcqp_embedding_reproduces_objective() {
    let mut rng = RngSpec::new(102).stream();
    let mut worst = 0.0f64;
    for k in 0..100 {
        let scn = scenario(400 + k / 10, 6, 3);
        let res = Resources::equal_split(&scn, &Matrix::filled(6, 3, 1.0));
        let y = rng.uniform(0.1, 50.0);
        let c = coeffs(&scn, &res, y).unwrap();
        let sdr = build_sdr(&c, &res, &scn);
        let x = random_association(&mut rng, 6, 3);
        let phi: Vec<f64> = (0..6).map(|_| if rng.open01() < 0.2 { 1.0 } else { rng.open01() }).collect();
        let t = c.max_delay(&x, &phi);
        let a = Allocation { x: x.clone(), phi: phi.clone(), resources: res.clone(), delay_bound: t };
        let reference = oracle::reference_cost(&scn, &a).unwrap().part1_objective(&scn, y);
        let scale = reference.abs().max(1.0);
        let s = sdr.lift(&x, &phi);
        worst = worst
            .max((c.objective(&x, &phi, t) - reference).abs() / scale)
            .max((sdr.objective(&s, t) - reference).abs() / scale)
            .max(sdr.program.primal_residual(&s, t / sdr.time_scale));
    }
    verdict("qcqp embedding", worst <= 1e-9, format!("max gap {worst:.2e} over 100 draws"));
}

#[test]
fn association_step_against_enumeration() {
    let (mut worst_bound, mut worst_gap) = (f64::NEG_INFINITY, 0.0f64);
    for seed in 0..20 {
        let scn = scenario(200 + seed, 3, 2);
        let res = Resources::equal_split(&scn, &Matrix::filled(3, 2, 1.0));
        let y = model::scenario_scr(&scn, &dashf::initialize(&scn).unwrap()).unwrap();
        let best = oracle::brute_force_association(&scn, &res, y, None).unwrap();
        let c = coeffs(&scn, &res, y).unwrap();
        let relax = solve_relaxation(&build_sdr(&c, &res, &scn), &SdpSettings::default()).unwrap();
        let part1 = solve_part1(&scn, &res, None, y, &SdpSettings::default()).unwrap();
        let scale = best.objective.abs().max(1.0);
        worst_bound = worst_bound.max((relax.lower_bound - best.objective) / scale);
        worst_gap = worst_gap.max((part1.objective - best.objective) / best.objective.abs());
    }
    verdict(
        "association oracle gap",
        worst_bound <= 1e-6 && worst_gap <= 0.05,
        format!("lower bound exceeds optimum by at most {worst_bound:.2e} (relative); rounded gap at most {:.2}% over 20 instances", 100.0 * worst_gap),
    );
}

#[test]
fn resource_step_against_grid_and_differences() {
    let mut worst_grid = 0.0f64;
    for seed in 0..10 {
        let scn = scenario(300 + seed, 1, 1);
        let x = Matrix::filled(1, 1, 1.0);
        let phi = [0.1 + 0.08 * seed as f64];
        let base = Resources::equal_split(&scn, &x);
        let a = Allocation { x: x.clone(), phi: phi.to_vec(), resources: base.clone(), delay_bound: 0.0 };
        let y = model::scenario_scr(&scn, &a).unwrap() * [0.5, 2.0][seed as usize % 2];
        let settings = Part2Settings { free: FreeVars::BANDWIDTH_ONLY, ..Part2Settings::default() };
        let mut start = ResourceVars { resources: base.clone(), delay_bound: 0.0 };
        start.resources.bandwidth[(0, 0)] *= 0.5;
        let out = solve_part2(&scn, &x, &phi, y, &start, &settings).unwrap();
        let got = direct_objective(&out.vars, &scn, &x, &phi, y).unwrap();
        let grid = GridSpec { axes: vec![GridAxis { var: GridVar::Bandwidth(0), lo: 0.0, hi: scn.servers[0].bandwidth, steps: 10_001 }] };
        let best = oracle::grid_resource_search(&scn, &x, &phi, y, &base, &grid).unwrap().unwrap();
        worst_grid = worst_grid.max(rel(got, best.objective));
    }
    let scn = scenario(7, 4, 2);
    let x = model::association_from_choice(2, &[0, 1, 0, 1]);
    let mut rng = RngSpec::new(103).stream();
    let mut worst_fd = 0.0f64;
    for _ in 0..20 {
        let phi: Vec<f64> = (0..4).map(|_| rng.uniform(0.05, 0.95)).collect();
        let vars = random_vars(&mut rng, &scn, &x, &phi);
        let z = update_z(&vars, &scn, &x, &phi).unwrap();
        let prob = Part2Problem::new(&scn, &x, &phi, rng.uniform(1.0, 30.0), vars.delay_bound).unwrap();
        let v = prob.pack(&vars);
        let g = prob.gradient(&v, &z).unwrap();
        let fd = oracle::finite_diff_grad(|p: &[f64]| prob.objective(p, Some(&z)).unwrap(), &v, 1e-6);
        let scale = g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        for (a, b) in g.iter().zip(&fd) {
            worst_fd = worst_fd.max((a - b).abs() / a.abs().max(1e-3 * scale));
        }
    }
    verdict(
        "resource oracle gap",
        worst_grid <= 1e-3 && worst_fd <= 1e-4,
        format!("grid gap {worst_grid:.2e} over 10 single-user instances; gradient error {worst_fd:.2e} over 20 points"),
    );
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn hungarian_is_exact() {
    let mut rng = RngSpec::new(104).stream();
    let mut worst = 0.0f64;
    for k in 0..100 {
        let n = 1 + k % 7;
        let w = Matrix::from_fn(n, n, |_, _| rng.uniform(-10.0, 10.0));
        let got = hungarian::assignment_value(&w, &hungarian::max_weight_assignment(&w));
        let best = permutations(n).iter().map(|p| hungarian::assignment_value(&w, p)).fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max((best - got).abs());
    }
    verdict("hungarian", worst <= 1e-12, format!("max gap to exhaustive {worst:.1e} over 100 matrices up to 7x7"));
}

#[test]
fn main_loop_converges_on_default_scenario() {
    let scn = generate(&ScenarioConfig::default()).unwrap();
    let t0 = Instant::now();
    let (sol, trace) = dashf::run(&scn, &RunOptions::default(), &WallClock::start()).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let pass = sol.converged && trace.rows.len() <= 15 && trace.is_monotone(MONOTONE_TOL) && secs < 60.0;
    verdict(
        "convergence",
        pass,
        format!("{} iterations, monotone {}, {secs:.2} s, ratio sequence {:?}", trace.rows.len(), trace.is_monotone(MONOTONE_TOL), trace.y_sequence()),
    );
}

#[test]
fn ranking_over_five_seeds() {
    let mut sums = [0.0f64; 5];
    let mut lines = Vec::new();
    for seed in 0..5 {
        let scn = generate(&ScenarioConfig::default().with_seed(seed)).unwrap();
        let runs = experiment::run_many(&scn, &Algorithm::COMPARED, &RunOptions::default());
        let scr: Vec<f64> = runs.into_iter().map(|r| r.unwrap().solution.scr).collect();
        for (s, v) in sums.iter_mut().zip(&scr) {
            *s += v;
        }
        lines.push(format!("seed {seed}: {scr:.3?}"));
    }
    let mean = sums.map(|s| s / 5.0);
    let idx = |a: Algorithm| Algorithm::COMPARED.iter().position(|&b| b == a).unwrap();
    let dashf = mean[idx(Algorithm::Dashf)];
    let pass = mean.iter().all(|&v| dashf >= v) && mean[idx(Algorithm::Aauco)] >= mean[idx(Algorithm::Rucaa)] && dashf >= mean[idx(Algorithm::Gucro)];
    verdict("ranking", pass, format!("mean SCR (dashf, rucaa, gucaa, aauco, gucro) = {mean:.3?}; {}", lines.join("; ")));
}

fn bandwidth_spec() -> ExperimentSpec {
    ExperimentSpec {
        schema_version: 1,
        kind: "experiment".into(),
        scenario: ScenarioRef::Config(ScenarioConfig::default()),
        algorithms: Algorithm::COMPARED.to_vec(),
        sweep: SweepAxis::BandwidthHz((1..=10).map(|k| k as f64 * 1e7).collect()),
        seeds: (0..5).collect(),
        epsilon: 1e-3,
        output_dir: None,
    }
}

#[test]
fn bandwidth_sweep_dominance_and_trend() {
    let t0 = Instant::now();
    let spec = bandwidth_spec();
    let rows = experiment::run_sweep(&spec, &ScenarioConfig::default(), |_, _| {});
    let secs = t0.elapsed().as_secs_f64();
    let mut failures = Vec::new();
    if rows.iter().any(|r| r.status != RowStatus::Ok) {
        failures.push("some runs did not finish".to_string());
    }
    let scr = |alg: Algorithm, point: usize, seed: u64| {
        rows.iter()
            .find(|r| r.algorithm == alg && r.point == point && r.seed == seed)
            .and_then(|r| r.values.as_ref())
            .map_or(f64::NAN, |v| v.scr)
    };
    for &seed in &spec.seeds {
        for p in 0..10 {
            let d = scr(Algorithm::Dashf, p, seed);
            for &alg in &Algorithm::COMPARED[1..] {
                if !(d >= scr(alg, p, seed)) {
                    failures.push(format!("seed {seed} point {p}: {alg} {:.4} above dashf {d:.4}", scr(alg, p, seed)));
                }
            }
            if p > 0 && !(d >= 0.98 * scr(Algorithm::Dashf, p - 1, seed)) {
                failures.push(format!("seed {seed}: dashf drops from {:.4} to {d:.4} at point {p}", scr(Algorithm::Dashf, p - 1, seed)));
            }
        }
    }
    if secs >= 900.0 {
        failures.push(format!("took {secs:.0} s"));
    }
    let detail = if failures.is_empty() { format!("50 points x 5 algorithms in {secs:.1} s") } else { failures.join("; ") };
    verdict("bandwidth sweep", failures.is_empty(), detail);
}

#[test]
fn solutions_are_clean() {
    let (mut violations, mut residual, mut ratio_gap) = (0usize, 0.0f64, 0.0f64);
    for seed in 0..5 {
        let scn = generate(&ScenarioConfig::default().with_seed(seed)).unwrap();
        for r in experiment::run_many(&scn, &Algorithm::COMPARED, &RunOptions::default()) {
            let r = r.unwrap();
            violations += check_feasibility(&scn, &r.solution.allocation).len();
            let bd = &r.breakdown;
            let v = bd.dinkelbach_value(r.solution.scr, scn.weight_delay, scn.weight_energy);
            ratio_gap = ratio_gap.max(v.abs() / bd.total_score);
            let shares = dashf::initialize(&scn).unwrap().resources;
            let c = association::coeffs(&scn, &shares, r.solution.scr).unwrap();
            let relax = solve_relaxation(&build_sdr(&c, &shares, &scn), &SdpSettings::default()).unwrap();
            residual = residual.max(relax.solution.primal_residual).max(relax.solution.dual_residual);
        }
    }
    let pass = violations == 0 && residual <= 1e-6 && ratio_gap <= 1e-9;
    verdict(
        "hygiene",
        pass,
        format!("{violations} feasibility violations, max relaxation residual {residual:.2e}, max |V - yD|/V {ratio_gap:.2e} over 25 runs"),
    );
}
