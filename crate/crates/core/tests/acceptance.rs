//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod support;

use std::cell::Cell;
use std::time::{Duration, Instant};

use ndarray::Array2;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use topoprune::engine::{
    bench, block_mask, encode, naive_masked_matmul_counted, random_masked_weights, regular_matmul_counted,
    relative_deviation, BenchConfig, GatherPlan,
};
use topoprune::graph::{is_bipartite, is_connected, path_length_sum, random_regular, ring_lattice};
use topoprune::mask::{bundled, model_masks, model_reduction, partition};
use topoprune::metrics::{aopu, aopu_total, bfsst, gr_graph, gr_node, lower_bound_aspl, theta};
use topoprune::nn::{blobs, BlobConfig, Classifier, DemoConfig, TinyMlp};
use topoprune::search::{minimize_aspl, SearchConfig};
use topoprune::RegularGraph;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn first<T: std::fmt::Debug>(items: &[T]) -> String {
    items.first().map(|x| format!(" (first: {x:?})")).unwrap_or_default()
}

fn search_from(g0: &RegularGraph, seed: u64) -> f64 {
    minimize_aspl(g0, &SearchConfig::new(10_000, seed)).unwrap().final_aspl()
}

fn start_graph(n: usize, k: usize, seed: u64) -> RegularGraph {
    if k.is_multiple_of(2) {
        ring_lattice(n, k).unwrap()
    } else {
        random_regular(n, k, seed).unwrap()
    }
}

fn ac1_search_effectiveness() -> Outcome {
    let g0 = ring_lattice(64, 4).unwrap();
    let start = path_length_sum(&g0).unwrap();
    // Offsets 1 and 2 on a 64-ring: distance d covers ring offsets 2d-1 and 2d
    // on both sides, so d = 1..15 reach 4 nodes each and d = 16 the last 3.
    // Each source sums 4 * 120 + 3 * 16 = 528.
    let start_ok = start.total == 64 * 528 && start.pairs == 64 * 63;
    let bound = lower_bound_aspl(64, 4).unwrap();
    let bound_ok = bound.depth_sum == 180 && (bound.value() - 180.0 / 63.0).abs() < 1e-12;
    let mut finals = Vec::new();
    let mut slowest = Duration::ZERO;
    for seed in [1, 2, 3] {
        let t = Instant::now();
        finals.push(search_from(&g0, seed));
        slowest = slowest.max(t.elapsed());
    }
    let ok = start_ok && bound_ok && finals.iter().all(|&a| a <= 3.6) && slowest <= Duration::from_secs(60);
    check(
        ok,
        format!(
            "start {:.4} (528/63), bound {:.4} (180/63), finals {:?}, slowest {:.2?} (<= 3.6, <= 60 s)",
            start.value(),
            bound.value(),
            finals.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>(),
            slowest
        ),
    )
}

fn ac2_theta() -> Outcome {
    let (t7, t8) = (theta(64, 7).unwrap(), theta(64, 8).unwrap());
    check(t7 == 2 && t8 == 1, format!("theta(64,7) = {t7}, theta(64,8) = {t8}"))
}

fn ac3_bound_shape() -> Outcome {
    let bounds: Vec<f64> = (4..=36).map(|k| lower_bound_aspl(64, k).unwrap().value()).collect();
    let monotone = bounds.windows(2).all(|w| w[1] <= w[0]);
    let rows: Vec<(usize, f64, f64)> = (8..=36)
        .into_par_iter()
        .map(|k| {
            let searched = search_from(&start_graph(64, k, 7), 7);
            (k, searched, bounds[k - 4])
        })
        .collect();
    let worst = rows.iter().map(|&(k, a, b)| (k, a / b - 1.0)).fold((0, f64::MIN), |m, r| if r.1 > m.1 { r } else { m });
    check(
        monotone && worst.1 <= 0.10,
        format!(
            "bound non-increasing over k=4..36: {monotone}; worst gap {:.2}% at k={} (<= 10%)",
            100.0 * worst.1,
            worst.0
        ),
    )
}

/// (ASPL, GR, AOPU) for each strictly improving, non-bipartite state of a
/// 64_4 search, in trajectory order.
fn improving_states(seed: u64) -> Vec<(f64, f64, f64)> {
    let g0 = ring_lattice(64, 4).unwrap();
    let out = minimize_aspl(&g0, &SearchConfig::new(10_000, seed)).unwrap();
    let mut states = Vec::new();
    let mut last_total = u64::MAX;
    for snap in out.trajectory.replay(&g0).unwrap() {
        let total = path_length_sum(&snap.graph).unwrap().total;
        if total < last_total {
            last_total = total;
            if !is_bipartite(&snap.graph).unwrap() {
                states.push(snap.graph);
            }
        }
    }
    states
        .par_iter()
        .map(|g| (path_length_sum(g).unwrap().value(), gr_graph(g).unwrap(), aopu(g, 15, 1).unwrap()))
        .collect()
}

const ASPL_BINS: usize = 160;

fn ac4_correlations() -> Outcome {
    // Snapshots are stratified over the ASPL range the search traverses: the
    // first improving state in each of ASPL_BINS equal-width bins. Sampling
    // improving states uniformly instead would put most points in the last
    // 0.15 of ASPL, where GR drifts back up by ~0.3 as the graph nears the
    // bound; the all-states coefficient is reported alongside.
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in [1, 2, 3] {
        let states = improving_states(seed);
        let (hi, lo) = (states[0].0, states[states.len() - 1].0);
        let mut first_in_bin = std::collections::BTreeMap::new();
        for (i, st) in states.iter().enumerate() {
            let bin = (((hi - st.0) / (hi - lo)) * ASPL_BINS as f64).min(ASPL_BINS as f64 - 1.0) as usize;
            first_in_bin.entry(bin).or_insert(i);
        }
        let picked: Vec<&(f64, f64, f64)> = first_in_bin.values().map(|&i| &states[i]).collect();
        let col = |f: fn(&(f64, f64, f64)) -> f64| picked.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let (a, gr, au) = (col(|r| r.0), col(|r| r.1), col(|r| r.2));
        let (rho_gr, rho_au) = (support::spearman(&a, &gr), support::spearman(&a, &au));
        let all_a: Vec<f64> = states.iter().map(|r| r.0).collect();
        let all_gr: Vec<f64> = states.iter().map(|r| r.1).collect();
        ok &= picked.len() >= 30 && rho_gr >= 0.9 && rho_au <= -0.9;
        parts.push(format!(
            "seed {seed}: {} snapshots, rho(ASPL,GR) {rho_gr:.3}, rho(ASPL,AOPU) {rho_au:.3} [all {} states: rho(ASPL,GR) {:.3}]",
            picked.len(),
            states.len(),
            support::spearman(&all_a, &all_gr)
        ));
    }
    check(ok, format!("{} (>= 30, >= 0.9, <= -0.9)", parts.join("; ")))
}

fn ac5_oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let mut cases = Vec::new();
    let mut seed = 100;
    for &n in &[8usize, 16, 64] {
        for &k in &[3usize, 4, 6] {
            let mut found = 0;
            while found < 3 {
                seed += 1;
                let g = random_regular(n, k, seed).unwrap();
                if is_connected(&g) && !is_bipartite(&g).unwrap() {
                    cases.push((g, seed));
                    found += 1;
                }
            }
        }
    }
    let failures: Vec<String> = cases
        .par_iter()
        .flat_map_iter(|(g, seed)| {
            let layers = if g.n() == 64 { 8 } else { 6 };
            let s = 1 + (*seed as usize % 2);
            let net = TinyMlp::build(g, layers, s, *seed).unwrap();
            let reports = net.grad_reach_all().unwrap();
            let mut bad = Vec::new();
            let reach_total: u64 = reports.iter().map(|r| r.reached).sum();
            let expect_total = aopu_total(g, layers, s).unwrap();
            let mean = reach_total as f64 / g.n() as f64;
            if reach_total != expect_total || mean != aopu(g, layers, s).unwrap() {
                bad.push(format!("n={} k={} seed={seed}: reach {reach_total} vs {expect_total}", g.n(), g.k()));
            }
            for r in &reports {
                let gr = gr_node(g, r.output_group).unwrap();
                let expect = (gr < layers).then_some(gr);
                if r.gr_observed != expect {
                    bad.push(format!("n={} seed={seed} j={}: gr {:?} vs {gr}", g.n(), r.output_group, r.gr_observed));
                }
            }
            bad
        })
        .collect();
    let elapsed = t.elapsed();
    check(
        failures.is_empty() && elapsed <= Duration::from_secs(120),
        format!("{} graphs, {} mismatches{}, {:.2?} (<= 2 min)", cases.len(), failures.len(), first(&failures), elapsed),
    )
}

fn ac6_reductions() -> Outcome {
    let model = bundled::vgg16_cifar();
    let targets = [(20, 68.77, 68.65), (16, 75.00, 74.89), (10, 84.38, 84.25), (6, 90.62, 90.49)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, p_ref, f_ref) in targets {
        let g = ring_lattice(64, k).unwrap();
        let stats = model_reduction(&model_masks(&g, &model).unwrap(), &model).unwrap();
        ok &= (stats.params_reduction - p_ref).abs() <= 0.5 && (stats.flops_reduction - f_ref).abs() <= 0.5;
        parts.push(format!("64_{k}: {:.2}/{:.2}", stats.params_reduction, stats.flops_reduction));
    }
    check(ok, format!("{} (each within 0.5 pt)", parts.join(", ")))
}

fn ac7_engine() -> Outcome {
    let mut runner = TestRunner::new(PropConfig { cases: 64, failure_persistence: None, ..PropConfig::default() });
    let strategy = (
        prop_oneof![Just((8usize, 3usize)), Just((16, 4)), Just((16, 6)), Just((12, 5))],
        prop_oneof![Just(1usize), Just(4), Just(8)],
        prop_oneof![Just(1usize), Just(16), Just(64)],
        any::<u64>(),
    );
    let worst_dev = Cell::new(0.0f64);
    let prop = runner.run(&strategy, |((n, k), s, batch, seed)| {
        let g = random_regular(n, k, seed).unwrap();
        let plan = GatherPlan::new(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = block_mask(&g, s, s);
        let w = random_masked_weights(&mask, &mut rng);
        let x = Array2::from_shape_fn((batch, n * s), |_| rng.random_range(-1.0..1.0));
        let part = partition(n * s, n).unwrap();
        let bw = encode(&w, &plan, &part, &part).unwrap();
        let (y_ref, macs_ref) = naive_masked_matmul_counted(&w, &mask, &x).unwrap();
        let (y, macs) = regular_matmul_counted(&bw, &plan, &x).unwrap();
        let dev = relative_deviation(&y, &y_ref);
        worst_dev.set(worst_dev.get().max(dev));
        prop_assert!(dev <= 1e-6, "deviation {dev}");
        // Exact ratio k/n, checked by cross-multiplication.
        prop_assert_eq!(macs * n as u64, macs_ref * k as u64);
        Ok(())
    });
    let cfg = BenchConfig { seed: 3, ..BenchConfig::new(64, 4, 8, 64, 25) };
    let report = bench(&cfg).unwrap();
    check(
        prop.is_ok() && report.t_regular_ms < report.t_naive_ms,
        format!(
            "property run {}, worst rel dev {:.1e} (<= 1e-6), MAC ratio exact; 64_4 s=8 batch=64: regular {:.3} ms vs naive {:.3} ms",
            if prop.is_ok() { "ok".to_string() } else { format!("{prop:?}") },
            worst_dev.get(),
            report.t_regular_ms,
            report.t_naive_ms
        ),
    )
}

fn ac8_invariants() -> Outcome {
    let mut problems = Vec::new();
    let mut accepted = 0;
    for (n, k, seed) in [(64usize, 4usize, 5u64), (32, 3, 6)] {
        let g0 = start_graph(n, k, seed);
        let out = minimize_aspl(&g0, &SearchConfig::new(10_000, seed)).unwrap();
        let mut prev = support::oracle_aspl(&g0).unwrap().0;
        for snap in out.trajectory.replay(&g0).unwrap().into_iter().skip(1) {
            let g = &snap.graph;
            let row = &out.trajectory.rows[snap.attempt - 1];
            if !row.accepted {
                continue;
            }
            accepted += 1;
            let Some((total, _)) = support::oracle_aspl(g) else {
                problems.push(format!("{n}_{k} attempt {}: disconnected", snap.attempt));
                continue;
            };
            if !support::is_simple_regular(g) || g.k() != k || total > prev || total != row.distance_total {
                problems.push(format!("{n}_{k} attempt {}: total {total} after {prev}", snap.attempt));
            }
            prev = total;
        }
    }

    let mut classes = 0;
    for (k, ns) in [(3usize, vec![4usize, 6, 8, 10, 12]), (4, vec![5, 6, 7, 8, 9, 10, 11, 12])] {
        for n in ns {
            let graphs = support::census::connected_regular(n, k);
            classes += graphs.len();
            let bad: Vec<String> = graphs
                .par_iter()
                .filter_map(|small| {
                    let g = RegularGraph::new(n, k, small.edges()).unwrap();
                    oracle_disagreement(&g).map(|e| format!("n={n} k={k}: {e}"))
                })
                .collect();
            problems.extend(bad);
        }
    }
    check(
        problems.is_empty() && classes == 1 + 2 + 5 + 19 + 85 + 1 + 1 + 2 + 6 + 16 + 59 + 265 + 1544,
        format!(
            "{accepted} accepted states checked; {classes} isomorphism classes (n <= 12, k in {{3,4}}); {} disagreements{}",
            problems.len(),
            first(&problems)
        ),
    )
}

/// Compares aspl, BFSST depth sums and GR against the independent oracles.
fn oracle_disagreement(g: &RegularGraph) -> Option<String> {
    let d = support::floyd_warshall(g);
    let (total, pairs) = support::oracle_aspl(g)?;
    let got = path_length_sum(g).ok()?;
    if got.total != total || got.pairs != pairs {
        return Some(format!("aspl {}/{} vs {total}/{pairs}", got.total, got.pairs));
    }
    if lower_bound_aspl(g.n(), g.k()).map(|b| b.value() > got.value() + 1e-12).unwrap_or(false) {
        return Some("aspl below lower bound".into());
    }
    let gr_oracle = support::oracle_gr(g);
    for v in 0..g.n() {
        let tree = bfsst(g, v).ok()?;
        let row_sum: usize = d[v].iter().sum();
        let row_max = *d[v].iter().max().unwrap();
        if tree.depth_sum() != row_sum || tree.max_depth() != row_max {
            return Some(format!("bfsst root {v}: {} vs {row_sum}", tree.depth_sum()));
        }
        match (gr_node(g, v), gr_oracle[v]) {
            (Ok(a), Some(b)) if a == b => {}
            (Err(_), None) => {}
            (a, b) => return Some(format!("gr node {v}: {a:?} vs {b:?}")),
        }
    }
    None
}

fn ac9_mask_invariance() -> Outcome {
    let g = ring_lattice(16, 4).unwrap();
    let data = blobs(&BlobConfig { classes: 4, dims: 8, points: 200, seed: 9 }).unwrap();
    let cfg = DemoConfig { seed: 9, ..DemoConfig::default() };
    let mut model = Classifier::new(&g, data.x.ncols(), data.classes, &cfg).unwrap();
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..300 {
        let idx: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..data.y.len())).collect();
        let x = data.x.select(ndarray::Axis(0), &idx);
        let y: Vec<usize> = idx.iter().map(|&i| data.y[i]).collect();
        model.sgd_step(&x, &y, cfg.lr).unwrap();
        worst = worst.max(model.net.pruned_max_abs());
    }
    let acc = model.accuracy(&data.x, &data.y).unwrap();
    check(
        worst == 0.0,
        format!("max |pruned weight| over 300 steps = {worst} (exactly 0); train accuracy {acc:.3} (qualitative only)"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("AC1 search effectiveness", ac1_search_effectiveness),
        ("AC2 theta discontinuity", ac2_theta),
        ("AC3 lower-bound shape", ac3_bound_shape),
        ("AC4 ASPL/GR/AOPU correlation", ac4_correlations),
        ("AC5 gradient oracle equivalence", ac5_oracle_equivalence),
        ("AC6 reduction accounting", ac6_reductions),
        ("AC7 sparse engine", ac7_engine),
        ("AC8 search invariants and exhaustive oracles", ac8_invariants),
        ("AC9 mask invariance", ac9_mask_invariance),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {name}: {detail} [{:.1?}]", t.elapsed());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
