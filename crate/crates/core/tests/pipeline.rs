use proptest::prelude::*;
use scr_core::dashf::{self, Algorithm, NoClock, RunOptions, MONOTONE_TOL};
use scr_core::model::{self, check_feasibility};
use scr_core::scenario::{generate, ScenarioConfig};

fn scenario(seed: u64, n: usize, m: usize) -> scr_core::Scenario {
    generate(&ScenarioConfig { n_users: n, n_servers: m, ..ScenarioConfig::default() }.with_seed(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_algorithm_returns_a_feasible_consistent_allocation(seed in 0u64..10_000, n in 1usize..7, m in 1usize..4) {
        let scn = scenario(seed, n, m);
        for alg in Algorithm::COMPARED {
            let (sol, trace) = dashf::solve(alg, &scn, &RunOptions::default(), &NoClock).unwrap();
            prop_assert!(check_feasibility(&scn, &sol.allocation).is_empty(), "{alg}");
            prop_assert!(trace.is_monotone(MONOTONE_TOL), "{alg}: {:?}", trace.y_sequence());
            let ratio = model::scenario_scr(&scn, &sol.allocation).unwrap();
            prop_assert!((ratio - sol.scr).abs() <= 1e-12 * ratio, "{alg}");
            prop_assert!((0..n).all(|u| sol.allocation.server_of(u).is_some()));
        }
    }

    #[test]
    fn tighter_tolerance_never_lowers_the_ratio(seed in 0u64..10_000) {
        let scn = scenario(seed, 4, 2);
        let loose = dashf::run(&scn, &RunOptions { epsilon: 1e-2, ..RunOptions::default() }, &NoClock).unwrap().0;
        let tight = dashf::run(&scn, &RunOptions { epsilon: 1e-6, ..RunOptions::default() }, &NoClock).unwrap().0;
        prop_assert!(tight.scr >= loose.scr * (1.0 - 1e-12));
    }
}

#[test]
fn exhaustive_association_is_never_far_behind_on_small_instances() {
    for seed in 0..6 {
        let scn = scenario(500 + seed, 3, 2);
        let (d, _) = dashf::run(&scn, &RunOptions::default(), &NoClock).unwrap();
        let (o, trace) = dashf::run_oracle(&scn, &RunOptions::default(), &NoClock).unwrap();
        assert!(o.converged && trace.is_monotone(MONOTONE_TOL));
        assert!(check_feasibility(&scn, &o.allocation).is_empty());
        // Both are local methods; the relaxation path should land close to the enumerated one.
        assert!(d.scr >= 0.9 * o.scr, "seed {seed}: dashf {} vs exhaustive {}", d.scr, o.scr);
    }
}

#[test]
fn larger_bandwidth_does_not_hurt_on_the_default_seed() {
    let base = generate(&ScenarioConfig::default()).unwrap();
    let wide = generate(&ScenarioConfig { server_bandwidth_hz: 5e7, ..ScenarioConfig::default() }).unwrap();
    let a = dashf::run(&base, &RunOptions::default(), &NoClock).unwrap().0;
    let b = dashf::run(&wide, &RunOptions::default(), &NoClock).unwrap().0;
    assert!(b.scr >= 0.98 * a.scr, "{} vs {}", b.scr, a.scr);
}
