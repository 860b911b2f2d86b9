mod support;

use proptest::prelude::*;
use topoprune::graph::{is_connected, path_length_sum, random_regular, ring_lattice};
use topoprune::metrics::lower_bound_aspl;
use topoprune::search::{minimize_aspl, SearchConfig};
use topoprune::Topology;

proptest! {
    #![proptest_config(ProptestConfig { cases: 40, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn every_state_is_simple_regular_connected_and_improving(
        seed in any::<u64>(),
        n in 8usize..40,
        k in 3usize..7,
        attempts in 1usize..400,
    ) {
        prop_assume!(n * k % 2 == 0 && k < n);
        let g0 = random_regular(n, k, seed).unwrap();
        prop_assume!(is_connected(&g0));
        let out = minimize_aspl(&g0, &SearchConfig::new(attempts, seed ^ 1)).unwrap();
        prop_assert_eq!(out.trajectory.rows.len(), attempts);
        prop_assert!(out.trajectory.rows.iter().enumerate().all(|(i, r)| r.attempt == i + 1));

        let states = out.trajectory.replay(&g0).unwrap();
        prop_assert_eq!(states.len(), out.trajectory.accepted_count() + 1);
        let mut prev = support::oracle_aspl(&g0).unwrap().0;
        for s in &states {
            prop_assert!(support::is_simple_regular(&s.graph));
            prop_assert_eq!(s.graph.k(), k);
            let (total, _) = support::oracle_aspl(&s.graph).expect("accepted state is connected");
            prop_assert!(total <= prev);
            prev = total;
        }
        // Rejected attempts leave the live graph untouched, so the last
        // accepted state is the returned graph.
        prop_assert_eq!(states.last().unwrap().graph.edges(), out.graph.edges());
        prop_assert_eq!(path_length_sum(&out.graph).unwrap(), out.last);
        // The trace's running total tracks the live graph after every attempt.
        let mut live = out.initial.total;
        for r in &out.trajectory.rows {
            if r.accepted {
                live = r.distance_total;
            }
            prop_assert_eq!(r.distance_total, live);
        }
    }

    #[test]
    fn identical_inputs_give_identical_runs(seed in any::<u64>(), attempts in 1usize..300) {
        let g0 = ring_lattice(24, 4).unwrap();
        let a = minimize_aspl(&g0, &SearchConfig::new(attempts, seed)).unwrap();
        let b = minimize_aspl(&g0, &SearchConfig::new(attempts, seed)).unwrap();
        prop_assert_eq!(a.graph.edges(), b.graph.edges());
        prop_assert_eq!(a.trajectory, b.trajectory);
    }
}

#[test]
fn complete_graph_is_a_fixed_point() {
    let k5 = support::complete(5);
    let out = minimize_aspl(&k5, &SearchConfig::new(200, 3)).unwrap();
    assert_eq!(out.trajectory.accepted_count(), 0);
    assert_eq!(out.graph.edges(), k5.edges());
    assert_eq!(out.final_aspl(), 1.0);
}

#[test]
fn reaches_within_thirty_percent_of_the_bound() {
    for k in [4usize, 6, 10, 16, 20] {
        let g0 = ring_lattice(64, k).unwrap();
        let bound = lower_bound_aspl(64, k).unwrap().value();
        for seed in [1, 2, 3] {
            let out = minimize_aspl(&g0, &SearchConfig::new(10_000, seed)).unwrap();
            let ratio = out.final_aspl() / bound;
            assert!(ratio <= 1.3, "k={k} seed={seed}: {} vs bound {bound}", out.final_aspl());
            assert!(ratio >= 1.0 - 1e-12);
        }
    }
}

#[test]
fn disconnected_start_is_rejected() {
    let two_triangles = topoprune::RegularGraph::new(6, 2, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]).unwrap();
    assert!(!is_connected(&two_triangles));
    assert!(two_triangles.neighbors(0).len() == 2);
    assert!(minimize_aspl(&two_triangles, &SearchConfig::new(10, 0)).is_err());
}
