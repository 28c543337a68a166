use super::*;
use crate::model::check_feasibility;
use crate::scenario::{generate, ScenarioConfig};

fn default_scn() -> Scenario {
    generate(&ScenarioConfig::default()).unwrap()
}

fn loads(x: &Matrix<f64>) -> Vec<usize> {
    (0..x.cols()).map(|m| x.col_sum(m) as usize).collect()
}

#[test]
fn initial_allocation() {
    let scn = default_scn();
    let a = initialize(&scn).unwrap();
    assert_eq!(loads(&a.x), [5, 5]);
    assert!(a.phi.iter().all(|&p| p == 0.5));
    assert!(check_feasibility(&scn, &a).is_empty());
    assert_eq!(a.delay_bound, model::evaluate(&scn, &a).unwrap().total_delay);
    assert_eq!(a.resources.bandwidth[(0, 1)], scn.servers[1].bandwidth / 10.0);
}

#[test]
fn main_loop_on_default_scenario() {
    let scn = default_scn();
    let (sol, trace) = run(&scn, &RunOptions::default(), &NoClock).unwrap();
    assert!(sol.converged, "{:?}", sol.note);
    assert!(trace.rows.len() <= 15);
    assert!(trace.is_monotone(MONOTONE_TOL), "{:?}", trace.y_sequence());
    assert!(check_feasibility(&scn, &sol.allocation).is_empty());
    let bd = model::evaluate(&scn, &sol.allocation).unwrap();
    let residual = bd.dinkelbach_value(sol.scr, scn.weight_delay, scn.weight_energy);
    assert!(residual.abs() <= 1e-9 * bd.total_score);
    assert_eq!(sol.scr, trace.rows.iter().map(|r| r.scr).fold(f64::NEG_INFINITY, f64::max));
}

#[test]
fn runs_are_deterministic() {
    let scn = default_scn();
    let a = run(&scn, &RunOptions::default(), &NoClock).unwrap();
    let b = run(&scn, &RunOptions::default(), &NoClock).unwrap();
    assert_eq!(a, b);
}

#[test]
fn greedy_balances_load() {
    let scn = default_scn();
    assert_eq!(loads(&greedy_association(&scn)), [5, 5]);
    let (sol, _) = run_gucaa(&scn, &RunOptions::default(), &NoClock).unwrap();
    assert_eq!(loads(&sol.allocation.x), [5, 5]);
}

#[test]
fn greedy_breaks_ties_by_gain() {
    let mut scn = generate(&ScenarioConfig { n_users: 1, ..ScenarioConfig::default() }).unwrap();
    scn.gain[(0, 0)] = 1e-12;
    scn.gain[(0, 1)] = 2e-12;
    assert_eq!(scn.n_servers(), 2);
    assert_eq!(greedy_association(&scn)[(0, 1)], 1.0);
    scn.gain[(0, 1)] = 1e-12;
    assert_eq!(greedy_association(&scn)[(0, 0)], 1.0);
}

#[test]
fn random_association_is_seeded() {
    let scn = default_scn();
    let x = random_association(&scn);
    assert_eq!(x, random_association(&scn));
    assert!((0..10).all(|n| x.row_sum(n) == 1.0));
}

#[test]
fn ranking_on_default_seed() {
    let scn = default_scn();
    let opts = RunOptions::default();
    let scr: Vec<(Algorithm, f64)> = Algorithm::COMPARED
        .into_iter()
        .map(|alg| {
            let (sol, _) = solve(alg, &scn, &opts, &NoClock).unwrap();
            assert!(check_feasibility(&scn, &sol.allocation).is_empty(), "{alg}");
            (alg, sol.scr)
        })
        .collect();
    let get = |a| scr.iter().find(|(b, _)| *b == a).unwrap().1;
    assert!(get(Algorithm::Aauco) >= get(Algorithm::Rucaa), "{scr:?}");
    for &(_, v) in &scr {
        assert!(get(Algorithm::Dashf) >= v, "{scr:?}");
    }
}

#[test]
fn exhaustive_variant_runs_small_and_refuses_large() {
    let scn = default_scn();
    let err = run_oracle(&scn, &RunOptions::default(), &NoClock).unwrap_err();
    assert!(matches!(err, Error::TooLarge(_)), "{err}");
    let small = generate(&ScenarioConfig { n_users: 3, ..ScenarioConfig::default() }.with_seed(5)).unwrap();
    let (sol, trace) = run_oracle(&small, &RunOptions::default(), &NoClock).unwrap();
    assert!(check_feasibility(&small, &sol.allocation).is_empty());
    assert!(trace.is_monotone(MONOTONE_TOL));
}

#[test]
fn bad_epsilon_is_rejected() {
    let scn = default_scn();
    let opts = RunOptions { epsilon: 0.0, ..RunOptions::default() };
    assert!(run(&scn, &opts, &NoClock).is_err());
}

#[test]
fn iteration_cap_is_reported() {
    let scn = default_scn();
    let opts = RunOptions { max_outer: 1, epsilon: 1e-12, ..RunOptions::default() };
    let (sol, trace) = run(&scn, &opts, &NoClock).unwrap();
    assert!(!sol.converged);
    assert_eq!(trace.rows.len(), 1);
}

#[test]
fn algorithm_names_round_trip() {
    for a in Algorithm::ALL {
        assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
    }
    assert!("DASHF".parse::<Algorithm>().is_ok());
    assert!("simplex".parse::<Algorithm>().is_err());
}
