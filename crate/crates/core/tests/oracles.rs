mod common;

use common::*;
use grnn::analysis::{micro_f1, parse_metrics, summarize_experiments, transition_matrix, MetricRecord};
use grnn::baselines::{link_features, propagate, run_ica, IcaConfig, IcaVariant};
use grnn::graph::{build_similarity_graph, EdgeMode, Graph, VertexId};
use grnn::numerics::{Rng, Vector};
use grnn::trainer::SplitSpec;
use grnn::tree::build_tree;
use grnn::units::Pooling;
use num_rational::Ratio;
use proptest::prelude::*;

fn mode(directed: bool) -> EdgeMode {
    if directed {
        EdgeMode::Directed
    } else {
        EdgeMode::Undirected
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unrolling_matches_recursive_expansion(seed in any::<u64>(), n in 1usize..=20, d in 0usize..=3, directed in any::<bool>()) {
        let mut rng = Rng::seed_from(seed);
        let p = if d == 3 { 0.12 } else { 0.25 };
        let g = random_graph(&mut rng, n, 2, 2, p, mode(directed));
        let target = VertexId(rng.below(n) as u32);
        let t = build_tree(&g, target, d).unwrap();
        prop_assert_eq!(nested_from_tree(&t, 0), reference_nested(&g, target, 0, d));
        for (id, node) in t.nodes().iter().enumerate() {
            for &c in &node.children {
                prop_assert!(c > id);
                prop_assert_eq!(t.node(c).depth, node.depth + 1);
            }
        }
    }

    #[test]
    fn transition_counts_match_walk_enumeration(seed in any::<u64>(), n in 1usize..=15, d in 1usize..=3) {
        let mut rng = Rng::seed_from(seed);
        let g = random_graph(&mut rng, n, 1, 3, 0.2, EdgeMode::Undirected);
        let t = transition_matrix(&g, d).unwrap();
        prop_assert_eq!(&t.counts, &reference_walk_counts(&g, d));
        for i in 0..3 {
            let s: f64 = t.probs.row(i).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn micro_f1_is_accuracy(preds in prop::collection::vec(0usize..5, 1..60), seed in any::<u64>()) {
        let mut rng = Rng::seed_from(seed);
        let truth: Vec<usize> = preds.iter().map(|&p| if rng.coin(0.5) { p } else { rng.below(5) }).collect();
        let correct = preds.iter().zip(&truth).filter(|(a, b)| a == b).count();
        let acc = correct as f64 / preds.len() as f64;
        prop_assert!((micro_f1(&preds, &truth).unwrap() - acc).abs() < 1e-12);
    }

    #[test]
    fn summary_ignores_record_order(values in prop::collection::vec(0.0f64..1.0, 1..12), seed in any::<u64>()) {
        let records: Vec<MetricRecord> = values.iter().enumerate().map(|(i, &v)| MetricRecord {
            dataset: "d".into(),
            model: if i % 3 == 0 { "LR".into() } else { "G-LSTM".into() },
            depth: Some(i % 2),
            pooling: Some(Pooling::Max),
            hidden: None,
            fraction: 0.85,
            split: i % 4,
            epoch: i,
            train_loss: None,
            test_micro_f1: v,
        }).collect();
        let mut shuffled = records.clone();
        Rng::seed_from(seed).shuffle(&mut shuffled);
        prop_assert_eq!(summarize_experiments(&records), summarize_experiments(&shuffled));
    }

    #[test]
    fn similarity_graph_matches_brute_force(seed in any::<u64>(), n in 4usize..=12, k in 1usize..=3) {
        let mut rng = Rng::seed_from(seed);
        let g = random_graph(&mut rng, n, 6, 2, 0.0, EdgeMode::Directed);
        let s = build_similarity_graph(&g, k).unwrap();
        for v in g.vertices() {
            let a = g.features(v);
            let mut cands: Vec<(Ratio<u64>, usize)> = g.vertices().filter(|&u| u != v).map(|u| {
                let b = g.features(u);
                let inter = a.iter().filter(|x| b.contains(x)).count() as u64;
                let denom = (a.len() * b.len()) as u64;
                let sq = if denom == 0 { Ratio::from_integer(0) } else { Ratio::new(inter * inter, denom) };
                (sq, u.index())
            }).collect();
            cands.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
            let expect: Vec<VertexId> = cands.iter().take(k).map(|&(_, j)| VertexId(j as u32)).collect();
            prop_assert_eq!(s.out_neighbors(v), &expect[..]);
        }
    }

    #[test]
    fn ica_variants_agree_without_repeated_neighbor_labels(seed in any::<u64>()) {
        let mut rng = Rng::seed_from(seed);
        // A perfect matching: every vertex has exactly one neighbor.
        let n = 12;
        let features: Vec<Vec<u32>> = (0..n).map(|_| (0..4u32).filter(|_| rng.coin(0.5)).collect()).collect();
        let labels: Vec<Option<usize>> = (0..n).map(|_| Some(rng.below(3))).collect();
        let edges: Vec<(usize, usize)> = (0..n / 2).map(|i| (2 * i, 2 * i + 1)).collect();
        let g = Graph::from_parts(4, vec!["a".into(), "b".into(), "c".into()], features, labels, &edges, EdgeMode::Undirected).unwrap();
        let split = SplitSpec { index: 0, seed, train: (0..8).map(VertexId).collect(), test: (8..12).map(VertexId).collect() };
        let b = run_ica::<f64>(&g, &split, &IcaConfig { variant: IcaVariant::Binary, ..Default::default() }).unwrap();
        let c = run_ica::<f64>(&g, &split, &IcaConfig { variant: IcaVariant::Count, ..Default::default() }).unwrap();
        prop_assert_eq!(b, c);
    }

    #[test]
    fn propagation_keeps_distributions_valid(seed in any::<u64>(), n in 2usize..=15) {
        let mut rng = Rng::seed_from(seed);
        let g = random_graph(&mut rng, n, 1, 3, 0.3, EdgeMode::Undirected);
        let clamped: Vec<bool> = (0..n).map(|_| rng.coin(0.4)).collect();
        let mut dist: Vec<Vector<f64>> = (0..n).map(|i| {
            if clamped[i] {
                let mut v = Vector::zeros(3);
                v[g.label(VertexId(i as u32)).unwrap()] = 1.0;
                v
            } else {
                let raw: Vec<f64> = (0..3).map(|_| rng.uniform(0.01, 1.0)).collect();
                let s: f64 = raw.iter().sum();
                Vector(raw.into_iter().map(|x| x / s).collect())
            }
        }).collect();
        let start = dist.clone();
        for _ in 0..20 {
            dist = grnn::baselines::step(&g, &dist, &clamped);
            for (i, d) in dist.iter().enumerate() {
                prop_assert!(d.iter().all(|&x| x >= 0.0));
                prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                if clamped[i] {
                    prop_assert_eq!(d, &start[i]);
                }
            }
        }
    }
}

#[test]
fn link_features_skip_unassigned_neighbors() {
    let g = Graph::from_parts(1, vec!["a".into(), "b".into()], vec![vec![]; 3], vec![Some(0); 3], &[(0, 1), (0, 2)], EdgeMode::Undirected)
        .unwrap();
    let f: Vec<f64> = link_features(&g, VertexId(0), &[None, Some(1), None], IcaVariant::Count);
    assert_eq!(f, vec![0.0, 1.0]);
}

#[test]
fn path_graph_propagation_matches_rational_iteration() {
    let g = Graph::from_parts(1, vec!["a".into(), "b".into()], vec![vec![]; 5], vec![Some(0); 5], &[(0, 1), (1, 2), (2, 3), (3, 4)], EdgeMode::Undirected)
        .unwrap();
    let clamped = [true, false, false, false, true];
    let init = [(1, 1), (1, 2), (1, 4), (3, 4), (0, 1)];
    let mut exact: Vec<Ratio<i64>> = init.iter().map(|&(a, b)| Ratio::new(a, b)).collect();
    let mut dist: Vec<Vector<f64>> = exact
        .iter()
        .map(|r| {
            let p = *r.numer() as f64 / *r.denom() as f64;
            Vector(vec![p, 1.0 - p])
        })
        .collect();
    for _ in 0..20 {
        let prev = exact.clone();
        for i in 1..4 {
            exact[i] = (prev[i - 1] + prev[i + 1]) / 2;
        }
        dist = propagate(&g, dist, &clamped, 1);
        for (r, d) in exact.iter().zip(&dist) {
            assert_eq!(d[0], *r.numer() as f64 / *r.denom() as f64);
            let q = Ratio::from_integer(1) - r;
            assert_eq!(d[1], *q.numer() as f64 / *q.denom() as f64);
        }
    }
}

#[test]
fn malformed_metric_lines_do_not_poison_a_summary() {
    let good = r#"{"dataset":"x","model":"LR","depth":null,"pooling":null,"hidden":null,"fraction":0.85,"split":0,"epoch":0,"train_loss":null,"test_micro_f1":0.5}"#;
    let recs = parse_metrics(&format!("{good}\n{{\"dataset\": 3}}\n{good}\n"), "inline");
    let rows = summarize_experiments(&recs);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].mean, 0.5);
}
