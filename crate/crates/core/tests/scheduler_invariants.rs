use proptest::prelude::*;

use greensched::power::PowerProfile;
use greensched::scheduler::exhaustive::{combination_count, exhaustive_best};
use greensched::scheduler::{evaluate_combination, footprint, Pruning, Scheduler, Variant, DEFAULT_KEEP};
use greensched::topology::{build_fat_tree, FatTree, DEFAULT_LINK_RATE_BPS};
use greensched::traffic::{generate_flow_count, TrafficScenario};

fn tree(k: usize) -> FatTree {
    build_fat_tree(k, DEFAULT_LINK_RATE_BPS).unwrap()
}

fn scenario(t: &FatTree, seed: u64, n: usize) -> TrafficScenario {
    generate_flow_count(t, seed, n, 38e9).unwrap()
}

fn check_run(t: &FatTree, variant: Variant, sc: &TrafficScenario) -> Result<(), TestCaseError> {
    let profile = PowerProfile::default();
    let mut s = Scheduler::new(t, profile.clone(), variant);
    for r in &sc.requests {
        let before = s.network().clone();
        let d = s.schedule(r.clone()).unwrap();

        prop_assert!(s.combinations().len() <= DEFAULT_KEEP);
        prop_assert!(d.candidates_evaluated <= DEFAULT_KEEP * d.path_count);

        // stored metrics equal a recomputation against the same reference
        for c in s.combinations() {
            let fresh =
                evaluate_combination(c.assignment.clone(), t, &profile, variant, &before).unwrap();
            prop_assert_eq!(fresh.metrics, c.metrics);
            prop_assert_eq!(fresh.objective, c.objective);
        }

        let net = s.network();
        let used = footprint(&net.installed);
        for sw in 0..t.num_switches() {
            if variant.sleeps_idle_switches() {
                // asleep exactly when idle
                prop_assert_eq!(net.is_sleeping(sw), !used.contains(&sw));
            } else {
                prop_assert!(!net.is_sleeping(sw));
            }
        }
        prop_assert_eq!(net.installed.len(), s.requests().len());

        let installed = s.installed_metrics().unwrap();
        prop_assert_eq!(installed.metrics.transition_degree, 0);
        prop_assert!((installed.metrics.total_pc_w - s.total_power().unwrap()).abs() < 1e-5);
        prop_assert!((installed.metrics.total_pc_w - d.metrics.total_pc_w).abs() < 1e-5);
        prop_assert!((installed.metrics.sum_bw_bps - d.metrics.sum_bw_bps).abs() < 1.0);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scheduling_invariants(seed in 0u64..10_000, k in prop::sample::select(vec![4usize, 6]), v in prop::sample::select(Variant::ALL.to_vec())) {
        let t = tree(k);
        let n = t.max_flows();
        check_run(&t, v, &scenario(&t, seed, n))?;
    }

    #[test]
    fn argmax_unchanged_by_profile_scale(seed in 0u64..10_000, factor in prop::sample::select(vec![0.5f64, 2.0, 4.0, 8.0])) {
        let t = tree(4);
        let sc = scenario(&t, seed, 8);
        for v in Variant::ALL {
            let mut a = Scheduler::new(&t, PowerProfile::default(), v);
            let mut b = Scheduler::new(&t, PowerProfile::default().scaled(factor), v);
            for r in &sc.requests {
                let da = a.schedule(r.clone()).unwrap();
                let db = b.schedule(r.clone()).unwrap();
                prop_assert_eq!(&da.path, &db.path);
            }
            prop_assert_eq!(&a.network().installed, &b.network().installed);
        }
    }
}

#[test]
fn unpruned_growth_is_the_path_product() {
    let t = tree(4);
    for seed in 0..5 {
        let sc = scenario(&t, seed, 5);
        for n in 1..=5 {
            let reqs = &sc.requests[..n];
            let product = combination_count(&t, reqs).unwrap();
            if product > 1024 {
                continue;
            }
            let mut s = Scheduler::new(&t, PowerProfile::default(), Variant::LpV1)
                .with_pruning(Pruning::Disabled);
            for r in reqs {
                s.schedule(r.clone()).unwrap();
            }
            assert_eq!(s.combinations().len(), product);
        }
    }
}

#[test]
fn single_flow_matches_exhaustive() {
    let t = tree(4);
    let profile = PowerProfile::default();
    for seed in 0..10 {
        let sc = scenario(&t, seed, 1);
        for v in Variant::ALL.into_iter().filter(|v| *v != Variant::Sp) {
            let mut s = Scheduler::new(&t, profile.clone(), v);
            let reference = s.network().clone();
            let d = s.schedule(sc.requests[0].clone()).unwrap();
            let ex = exhaustive_best(&t, &profile, v, &sc.requests, &reference).unwrap();
            assert_eq!(d.objective, ex.best.objective);
            assert_eq!(ex.combinations, 4);
        }
    }
}

#[test]
fn departures_restore_sleep() {
    let t = tree(4);
    let sc = scenario(&t, 3, 8);
    let mut s = Scheduler::new(&t, PowerProfile::default(), Variant::LpV4);
    for r in &sc.requests {
        s.schedule(r.clone()).unwrap();
    }
    for r in &sc.requests {
        s.depart(r.id).unwrap();
        let used = footprint(&s.network().installed);
        for sw in 0..t.num_switches() {
            assert_eq!(s.network().is_sleeping(sw), !used.contains(&sw));
        }
        assert!(s.combinations().iter().all(|c| !c.assignment.contains_key(&r.id)));
    }
    assert_eq!(s.network().active_count(), 0);
    assert!(s.depart(0).is_err());
}

#[test]
fn sp_takes_first_path_and_never_moves_flows() {
    let t = tree(6);
    let sc = scenario(&t, 9, 27);
    let mut s = Scheduler::new(&t, PowerProfile::default(), Variant::Sp);
    for r in &sc.requests {
        let d = s.schedule(r.clone()).unwrap();
        assert!(d.rerouted.is_empty());
        assert_eq!(*d.path, t.enumerate_paths(r.src, r.dst).unwrap()[0]);
        assert_eq!(d.candidates_evaluated, 0);
    }
}
