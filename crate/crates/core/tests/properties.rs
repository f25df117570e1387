//! Property tests for invariants that hold on every input.

use proptest::prelude::*;

use graphweave::config::{DegreeMode, PipelineConfig};
use graphweave::generate::{ending_vector, perturb_degrees};
use graphweave::graph::{parse_edge_list, to_edge_list_string, Graph, SmoothedOperator};
use graphweave::infer::{
    diagnostic_system, random_starts, repair_connectivity, residual_objective, round_weighted, solve_exact_with,
    ExactOptions, WeightedAdjacency,
};
use graphweave::metrics::{statistic, wasserstein1, Metric};
use graphweave::par::{map_indexed, Execution};
use graphweave::rwt::{iterate, starting_vector, StartFunction};

/// Random graph on `2..max_n` nodes as an upper-triangle edge mask.
fn graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..max_n).prop_flat_map(|n| {
        proptest::collection::vec(any::<bool>(), n * (n - 1) / 2).prop_map(move |mask| {
            let mut edges = Vec::new();
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if mask[k] {
                        edges.push((i, j));
                    }
                    k += 1;
                }
            }
            Graph::new(n, edges).unwrap()
        })
    })
}

/// Graph whose every node has at least one neighbor: a path through all
/// nodes plus random chords.
fn positive_degree_graph(max_n: usize) -> impl Strategy<Value = Graph> {
    graph(max_n).prop_map(|g| {
        let n = g.n();
        let mut edges = g.edges().to_vec();
        edges.extend((1..n).map(|i| (i - 1, i)).filter(|&(u, v)| !g.has_edge(u, v)));
        Graph::new(n, edges).unwrap()
    })
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<usize>>()).prop_shuffle()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operator_is_symmetric_and_fixes_root_degrees(g in positive_degree_graph(25), alpha in 0.05f64..0.95) {
        let op = SmoothedOperator::new(&g, alpha).unwrap();
        let n = g.n();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((op.entry(i, j) - op.entry(j, i)).abs() < 1e-15);
            }
        }
        let root: Vec<f64> = op.smoothed_degrees().iter().map(|d| d.sqrt()).collect();
        let image = op.apply(&root);
        for (a, b) in image.iter().zip(&root) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn trajectories_conserve_mass_along_root_degrees(
        g in positive_degree_graph(25),
        alpha in 0.05f64..0.95,
        beta in prop::sample::select(vec![1, -1, 2, -2]),
    ) {
        let op = SmoothedOperator::new(&g, alpha).unwrap();
        let f = StartFunction::new(beta);
        let start = starting_vector(&g.degrees(), f).unwrap();
        prop_assert!(start.iter().all(|&x| x > 0.0));
        prop_assert!((start.iter().sum::<f64>() - g.n() as f64).abs() < 1e-9);
        let root: Vec<f64> = op.smoothed_degrees().iter().map(|d| d.sqrt()).collect();
        let mass = dot(&root, &start);
        for v in iterate(&op, start, 20) {
            prop_assert!((dot(&root, &v) - mass).abs() <= 1e-9 * mass);
        }
        // The ending vector is the projection of the start onto √d'.
        let w = ending_vector(&g.degrees(), f, alpha).unwrap();
        prop_assert!((dot(&root, &w) - mass).abs() <= 1e-9 * mass);
    }

    #[test]
    fn edge_list_round_trip(g in graph(30)) {
        let text = to_edge_list_string(&g);
        let back = parse_edge_list(&text, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn permutation_preserves_structure(g in graph(20).prop_flat_map(|g| {
        let n = g.n();
        (Just(g), permutation(n))
    })) {
        let (g, perm) = g;
        let h = g.permute(&perm).unwrap();
        prop_assert_eq!(h.edge_count(), g.edge_count());
        for v in 0..g.n() {
            prop_assert_eq!(h.degree(perm[v]), g.degree(v));
        }
        prop_assert_eq!(g.hamming_distance(&g), 0);
        for metric in [Metric::Degree, Metric::Pagerank, Metric::Clustering] {
            let mut a = statistic(&g, metric, 0).unwrap().values;
            let mut b = statistic(&h, metric, 0).unwrap().values;
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9, "{metric}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn perturbed_degrees_are_graphical(g in positive_degree_graph(30), flip in 0.0f64..=1.0, seed in any::<u64>()) {
        let d = perturb_degrees(&g, flip, seed).unwrap();
        prop_assert_eq!(d.len(), g.n());
        prop_assert!(d.is_graphical());
    }

    #[test]
    fn rounding_gives_a_simple_graph(n in 2usize..15, seed in any::<u64>(), weights in proptest::collection::vec(0.0f64..=1.0, 105)) {
        let upper = weights[..n * (n - 1) / 2].to_vec();
        let w = WeightedAdjacency::new(n, upper).unwrap();
        let d = graphweave::graph::DegreeSequence::new((0..n).map(|i| 1 + (seed as usize >> i) % (n - 1)).collect());
        let r = round_weighted(&w, &d).unwrap();
        prop_assert_eq!(r.graph.n(), n);
        prop_assert!(r.graph.edges().iter().all(|&(u, v)| u < v));
        prop_assert!(r.degree_error.is_finite());
    }

    #[test]
    fn repair_preserves_degrees(g in graph(25), seed in any::<u64>()) {
        let fixed = repair_connectivity(&g, seed);
        prop_assert_eq!(fixed.degrees(), g.degrees());
        if g.is_connected() {
            prop_assert_eq!(fixed, g);
        }
    }

    #[test]
    fn wasserstein_is_a_metric_on_samples(
        x in proptest::collection::vec(-50.0f64..50.0, 1..20),
        y in proptest::collection::vec(-50.0f64..50.0, 1..20),
        shift in -10.0f64..10.0,
    ) {
        let xy = wasserstein1(&x, &y).unwrap();
        prop_assert!(xy >= 0.0);
        prop_assert!((xy - wasserstein1(&y, &x).unwrap()).abs() < 1e-9);
        prop_assert_eq!(wasserstein1(&x, &x).unwrap(), 0.0);
        let moved: Vec<f64> = x.iter().map(|v| v + shift).collect();
        prop_assert!((wasserstein1(&x, &moved).unwrap() - shift.abs()).abs() < 1e-9);
    }

    #[test]
    fn config_text_round_trip(
        alpha in 0.01f64..0.99,
        k in 2usize..40,
        seed in any::<u64>(),
        flip in 0.0f64..=1.0,
        connected in any::<bool>(),
        mode in prop::sample::select(vec![DegreeMode::Perturb, DegreeMode::Powerlaw, DegreeMode::Lognormal]),
    ) {
        let mut cfg = PipelineConfig::default();
        cfg.alpha = alpha;
        cfg.k = k;
        cfg.seed = seed;
        cfg.flip_fraction = flip;
        cfg.ensure_connected = connected;
        cfg.degree_source = mode;
        let mut back = PipelineConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn execution_modes_agree(len in 0usize..500) {
        let seq = map_indexed(Execution::Sequential, len, |i| (i as f64).sqrt());
        let par = map_indexed(Execution::Parallel, len, |i| (i as f64).sqrt());
        prop_assert_eq!(seq, par);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_solution_meets_degrees_and_beats_the_truth(
        g in positive_degree_graph(8),
        seed in any::<u64>(),
        noise in proptest::collection::vec(-0.1f64..0.1, 64),
    ) {
        let mut sys = diagnostic_system(&g, &random_starts(g.n(), 2, seed), 0.9, 2).unwrap();
        for (k, v) in sys.v2.iter_mut().flatten().enumerate() {
            *v *= 1.0 + noise[k % noise.len()];
        }
        let budget = ExactOptions { node_limit: 20_000_000, ..ExactOptions::default() };
        let sol = solve_exact_with(&sys, &budget, None).unwrap();
        prop_assert!(sol.optimal);
        prop_assert_eq!(sol.graph.degrees(), g.degrees());
        let truth = residual_objective(&g, &sys).unwrap();
        prop_assert!(sol.objective <= truth);
        prop_assert_eq!(sol.objective, residual_objective(&sol.graph, &sys).unwrap());
    }
}
