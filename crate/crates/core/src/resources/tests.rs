use super::*;
use crate::model::{check_feasibility, ServerProfile, UserProfile};
use crate::scenario::{generate, RngSpec, ScenarioConfig, UniformStream};

fn scenario(seed: u64, n: usize, m: usize) -> Scenario {
    generate(&ScenarioConfig { n_users: n, n_servers: m, ..ScenarioConfig::default() }.with_seed(seed)).unwrap()
}

fn cyclic(n: usize, m: usize) -> Matrix<f64> {
    model::association_from_choice(m, &(0..n).map(|i| i % m).collect::<Vec<_>>())
}

/// Random strictly feasible resources for association `x`, with the delay bound at the implied maximum.
fn random_vars(rng: &mut UniformStream, scn: &Scenario, x: &Matrix<f64>, phi: &[f64]) -> ResourceVars {
    let (n_users, n_servers) = (scn.n_users(), scn.n_servers());
    let mut r = Resources::zeros(n_users, n_servers);
    for m in 0..n_servers {
        let members: Vec<usize> = (0..n_users).filter(|&n| x[(n, m)] > 0.5).collect();
        for k in 0..3 {
            let w: Vec<f64> = members.iter().map(|_| rng.uniform(0.05, 1.0)).collect();
            let total: f64 = w.iter().sum::<f64>() / rng.uniform(0.3, 0.99);
            for (i, &n) in members.iter().enumerate() {
                let s = &scn.servers[m];
                let cap = [s.bandwidth, s.max_power, s.max_speed][k];
                let target = [&mut r.bandwidth, &mut r.server_power, &mut r.server_speed];
                let mat = target.into_iter().nth(k).unwrap();
                mat[(n, m)] = cap * w[i] / total;
            }
        }
    }
    for n in 0..n_users {
        r.user_power[n] = scn.users[n].max_power * rng.uniform(0.05, 0.99);
        r.user_speed[n] = scn.users[n].max_speed * rng.uniform(0.05, 0.99);
    }
    let a = Allocation { x: x.clone(), phi: phi.to_vec(), resources: r.clone(), delay_bound: 0.0 };
    let t = model::evaluate(scn, &a).unwrap().total_delay;
    ResourceVars { resources: r, delay_bound: t }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn unit_scenario() -> Scenario {
    Scenario {
        seed: 0,
        users: vec![UserProfile {
            position: [0.0, 0.0],
            params: 1.0,
            flops_per_param: 1.0,
            epochs: 1.0,
            max_speed: 1.0,
            max_power: 1.0,
            capacitance: 1.0,
        }],
        servers: vec![ServerProfile {
            position: [0.0, 0.0],
            bandwidth: 1.0,
            max_power: 1.0,
            max_speed: 1.0,
            epochs: 1.0,
            capacitance: 1.0,
        }],
        gain: Matrix::filled(1, 1, 1.0),
        noise_psd: 1.0,
        weight_delay: 1.0,
        weight_energy: 1.0,
        score_scale: 1.0,
        score_norm: 1.0,
        bits_per_param: 1.0,
    }
}

#[test]
fn chi_examples() {
    let scn = unit_scenario();
    let x = Matrix::filled(1, 1, 1.0);
    let mut r = Resources::zeros(1, 1);
    r.user_power[0] = 1.0;
    r.server_power[(0, 0)] = 1.0;
    let vars = ResourceVars { resources: r, delay_bound: 0.0 };
    assert_eq!(chi(&vars, &scn, &x, &[0.25], 0, 0), (0.25, 0.75));
    assert_eq!(chi(&vars, &scn, &Matrix::zeros(1, 1), &[0.25], 0, 0), (0.0, 0.0));
    assert_eq!(chi(&vars, &scn, &x, &[1.0], 0, 0).1, 0.0);
}

#[test]
fn unit_rate_gives_half() {
    // b = 1, snr = 1: rate 1 bit/s; chi_up = 1 at phi = 1.
    let scn = unit_scenario();
    let x = Matrix::filled(1, 1, 1.0);
    let mut r = Resources::zeros(1, 1);
    r.bandwidth[(0, 0)] = 1.0;
    r.user_power[0] = 1.0;
    r.server_power[(0, 0)] = 1.0;
    let vars = ResourceVars { resources: r, delay_bound: 1.0 };
    let z = update_z(&vars, &scn, &x, &[1.0]).unwrap();
    assert_eq!(z.uplink[(0, 0)], Some(0.5));
    assert_eq!(z.downlink[(0, 0)], None);
    let z = update_z(&vars, &scn, &x, &[0.0]).unwrap();
    assert_eq!(z.uplink[(0, 0)], None);
}

#[test]
fn zero_rate_with_data_is_an_error() {
    let scn = unit_scenario();
    let x = Matrix::filled(1, 1, 1.0);
    let mut r = Resources::zeros(1, 1);
    r.user_power[0] = 1.0;
    let vars = ResourceVars { resources: r, delay_bound: 1.0 };
    assert!(matches!(update_z(&vars, &scn, &x, &[0.5]), Err(Error::InfeasiblePair { user: 0, server: 0 })));
}

#[test]
fn transform_is_tight_at_its_auxiliaries() {
    let scn = scenario(1, 10, 2);
    let x = cyclic(10, 2);
    let mut rng = RngSpec::new(3).stream();
    for _ in 0..100 {
        let phi: Vec<f64> = (0..10).map(|_| rng.open01()).collect();
        let y = rng.uniform(1.0, 3000.0);
        let vars = random_vars(&mut rng, &scn, &x, &phi);
        let z = update_z(&vars, &scn, &x, &phi).unwrap();
        let t = transformed_objective(&vars, &z, &scn, &x, &phi, y).unwrap();
        let d = direct_objective(&vars, &scn, &x, &phi, y).unwrap();
        assert!((t - d).abs() <= 1e-9 * d.abs().max(1.0), "{t} vs {d}");
    }
}

#[test]
fn scalar_surrogate_minimum() {
    let mut rng = RngSpec::new(4).stream();
    for _ in 0..100 {
        let c = rng.uniform(1e-3, 1e3);
        let r = rng.uniform(1e-3, 1e6);
        let z = 1.0 / (2.0 * c * r);
        assert!(rel(c * c * z + 1.0 / (4.0 * r * r * z), c / r) < 1e-12);
        let z2 = z * rng.uniform(0.1, 10.0);
        assert!(c * c * z2 + 1.0 / (4.0 * r * r * z2) >= c / r * (1.0 - 1e-12));
    }
}

#[test]
fn transform_minorizes_direct_objective() {
    let scn = scenario(2, 6, 2);
    let x = cyclic(6, 2);
    let mut rng = RngSpec::new(5).stream();
    let phi: Vec<f64> = (0..6).map(|_| rng.open01()).collect();
    let anchor = random_vars(&mut rng, &scn, &x, &phi);
    let z = update_z(&anchor, &scn, &x, &phi).unwrap();
    for _ in 0..100 {
        let vars = random_vars(&mut rng, &scn, &x, &phi);
        let t = transformed_objective(&vars, &z, &scn, &x, &phi, 800.0).unwrap();
        let d = direct_objective(&vars, &scn, &x, &phi, 800.0).unwrap();
        assert!(t <= d + 1e-9 * d.abs().max(1.0));
    }
}

#[test]
fn zero_y_keeps_only_scores() {
    let mut scn = scenario(2, 4, 2);
    let x = cyclic(4, 2);
    let mut rng = RngSpec::new(6).stream();
    let phi = vec![0.3; 4];
    let mut vars = random_vars(&mut rng, &scn, &x, &phi);
    let z = update_z(&vars, &scn, &x, &phi).unwrap();
    let base = transformed_objective(&vars, &z, &scn, &x, &phi, 0.0).unwrap();
    let a = Allocation { x: x.clone(), phi: phi.clone(), resources: vars.resources.clone(), delay_bound: 0.0 };
    assert!(rel(base, model::evaluate(&scn, &a).unwrap().total_score) < 1e-12);
    vars.delay_bound *= 10.0;
    assert_eq!(transformed_objective(&vars, &z, &scn, &x, &phi, 0.0).unwrap(), base);
    scn.score_scale *= 2.0;
    assert!(rel(transformed_objective(&vars, &z, &scn, &x, &phi, 0.0).unwrap(), 2.0 * base) < 1e-12);
}

#[test]
fn gradient_matches_central_differences() {
    let scn = scenario(7, 4, 2);
    let x = cyclic(4, 2);
    let mut rng = RngSpec::new(8).stream();
    for _ in 0..20 {
        let phi: Vec<f64> = (0..4).map(|_| rng.uniform(0.05, 0.95)).collect();
        let vars = random_vars(&mut rng, &scn, &x, &phi);
        let z = update_z(&vars, &scn, &x, &phi).unwrap();
        let prob = Part2Problem::new(&scn, &x, &phi, 700.0, vars.delay_bound).unwrap();
        let v = prob.pack(&vars);
        let g = prob.gradient(&v, &z).unwrap();
        let scale = g.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        for i in 0..v.len() {
            let h = 1e-6 * v[i].abs().max(1e-3);
            let mut a = v.clone();
            let mut b = v.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (prob.objective(&a, Some(&z)).unwrap() - prob.objective(&b, Some(&z)).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-4 * g[i].abs().max(1e-3 * scale), "coord {i}: {fd} vs {}", g[i]);
        }
    }
}

#[test]
fn bandwidth_only_matches_grid() {
    let scn = scenario(9, 1, 1);
    let x = Matrix::filled(1, 1, 1.0);
    let phi = [0.4];
    let y = 900.0;
    let mut start = ResourceVars { resources: Resources::equal_split(&scn, &x), delay_bound: 0.0 };
    start.resources.bandwidth[(0, 0)] *= 0.5;
    start.resources.server_power[(0, 0)] *= 0.7;
    start.resources.server_speed[(0, 0)] *= 0.6;
    let z = update_z(&start, &scn, &x, &phi).unwrap();
    let out = solve_concave(&scn, &x, &phi, &z, y, &start, 1e-9, FreeVars::BANDWIDTH_ONLY).unwrap();
    assert_eq!(out.vars.resources.user_power, start.resources.user_power);
    let prob = Part2Problem::new(&scn, &x, &phi, y, 1.0).unwrap();
    let mut best = f64::NEG_INFINITY;
    for i in 1..10_000 {
        let mut vars = start.clone();
        vars.resources.bandwidth[(0, 0)] = scn.servers[0].bandwidth * i as f64 * 1e-4;
        let mut v = prob.pack(&vars);
        v[prob.dim() - 1] = prob.max_delay(&v).unwrap();
        best = best.max(prob.objective(&v, Some(&z)).unwrap());
    }
    assert!(out.objective >= best - 1e-3 * best.abs(), "{} vs {best}", out.objective);
    assert!(out.objective <= best + 1e-3 * best.abs());
}

#[test]
fn concave_step_never_descends() {
    let scn = scenario(10, 6, 2);
    let x = cyclic(6, 2);
    let mut rng = RngSpec::new(11).stream();
    for _ in 0..5 {
        let phi: Vec<f64> = (0..6).map(|_| rng.open01()).collect();
        let start = random_vars(&mut rng, &scn, &x, &phi);
        let z = update_z(&start, &scn, &x, &phi).unwrap();
        let before = transformed_objective(&start, &z, &scn, &x, &phi, 600.0).unwrap();
        let out = solve_concave(&scn, &x, &phi, &z, 600.0, &start, 1e-6, FreeVars::ALL).unwrap();
        assert!(out.objective >= before - 1e-12 * before.abs());
        assert!(out.converged);
    }
}

#[test]
fn part2_is_monotone_and_feasible() {
    let scn = scenario(12, 10, 2);
    let x = cyclic(10, 2);
    let phi = vec![0.5; 10];
    let start = ResourceVars { resources: Resources::equal_split(&scn, &x), delay_bound: 0.0 };
    let y = 700.0;
    let out = solve_part2(&scn, &x, &phi, y, &start, &Part2Settings::default()).unwrap();
    assert!(out.iterations <= 20, "{:?}", out.trace);
    for w in out.trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{:?}", out.trace);
    }
    let a = Allocation { x: x.clone(), phi: phi.clone(), resources: out.vars.resources.clone(), delay_bound: out.vars.delay_bound };
    let v = check_feasibility(&scn, &a);
    assert!(v.is_empty(), "{v:?}");

    let again = solve_part2(&scn, &x, &phi, y, &out.vars, &Part2Settings::default()).unwrap();
    let gain = again.trace.last().unwrap() - again.trace[0];
    assert!(again.iterations <= 3 && gain <= 1e-5 * again.trace[0].abs(), "{:?}", again.trace);
}

#[test]
fn symmetric_users_get_symmetric_resources() {
    let mut scn = scenario(13, 2, 1);
    scn.users[1] = scn.users[0].clone();
    scn.gain[(1, 0)] = scn.gain[(0, 0)];
    let x = Matrix::filled(2, 1, 1.0);
    let phi = vec![0.5, 0.5];
    let mut start = ResourceVars { resources: Resources::equal_split(&scn, &x), delay_bound: 0.0 };
    start.resources.bandwidth[(0, 0)] *= 0.6;
    let out = solve_part2(&scn, &x, &phi, 500.0, &start, &Part2Settings::default()).unwrap();
    let r = &out.vars.resources;
    assert!(rel(r.bandwidth[(0, 0)], r.bandwidth[(1, 0)]) < 1e-6, "{r:?}");
    assert!(rel(r.server_power[(0, 0)], r.server_power[(1, 0)]) < 1e-6);
    assert!(rel(r.server_speed[(0, 0)], r.server_speed[(1, 0)]) < 1e-6);
    assert!(rel(r.user_speed[0], r.user_speed[1]) < 1e-6);
}

#[test]
fn nonpositive_y_is_rejected() {
    let scn = scenario(1, 2, 1);
    let x = Matrix::filled(2, 1, 1.0);
    let start = ResourceVars { resources: Resources::equal_split(&scn, &x), delay_bound: 0.0 };
    assert!(solve_part2(&scn, &x, &[0.5, 0.5], 0.0, &start, &Part2Settings::default()).is_err());
}
