#![allow(dead_code)]

use std::collections::BTreeMap;

use grnn::graph::{EdgeMode, Graph, VertexId};
use grnn::model::{GrnnModel, ModelConfig, UnitKind};
use grnn::numerics::Rng;
use grnn::params::ParamSet;
use grnn::tree::build_tree;
use grnn::units::Pooling;

/// Erdős–Rényi style graph with random binary features and labels.
pub fn random_graph(rng: &mut Rng, n: usize, f: usize, l: usize, p_edge: f64, mode: EdgeMode) -> Graph {
    let features = (0..n)
        .map(|_| (0..f as u32).filter(|_| rng.coin(0.5)).collect())
        .collect();
    let labels = (0..n).map(|_| Some(rng.below(l))).collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.coin(p_edge) {
                edges.push((a, b));
            }
        }
    }
    let names = (0..l).map(|i| format!("c{i}")).collect();
    Graph::from_parts(f, names, features, labels, &edges, mode).unwrap()
}

/// Model with every parameter, biases included, drawn from `[-scale, scale]`.
pub fn random_model(cfg: ModelConfig, rng: &mut Rng, scale: f64) -> GrnnModel<f64> {
    let mut m = GrnnModel::<f64>::zeros(cfg);
    for t in m.params.tensors_mut() {
        for v in t.data.iter_mut() {
            *v = rng.uniform(-scale, scale);
        }
    }
    m
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps entries whose true
/// gradient is zero from dividing rounding noise by nothing.
pub fn relative_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

pub const REL_FLOOR: f64 = 1e-6;

/// Compares every analytic parameter gradient with a central difference.
pub fn grad_check(model: &GrnnModel<f64>, g: &Graph, target: VertexId, y: usize, eps: f64) -> GradCheck {
    let tree = build_tree(g, target, model.config.depth).unwrap();
    let (_, grads) = model.loss_and_gradients(g, &tree, y);
    let analytic: Vec<Vec<f64>> = grads.params.tensors().iter().map(|t| t.data.to_vec()).collect();
    let mut probe = model.clone();
    let mut out = GradCheck { max_rel_err: 0.0, checked: 0 };
    for (ti, a_t) in analytic.iter().enumerate() {
        for k in 0..a_t.len() {
            let orig = probe.params.tensors()[ti].data[k];
            probe.params.tensors_mut()[ti].data[k] = orig + eps;
            let up = probe.loss(g, &tree, y);
            probe.params.tensors_mut()[ti].data[k] = orig - eps;
            let down = probe.loss(g, &tree, y);
            probe.params.tensors_mut()[ti].data[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            out.max_rel_err = out.max_rel_err.max(relative_error(a_t[k], numeric, REL_FLOOR));
            out.checked += 1;
        }
    }
    out
}

pub fn model_config(unit: UnitKind, pooling: Pooling, hidden: usize, depth: usize, g: &Graph) -> ModelConfig {
    ModelConfig {
        unit,
        pooling,
        hidden,
        depth,
        class_count: g.class_count(),
        feature_dim: g.feature_dim(),
    }
}

/// Multiset of (vertex, depth) pairs reached by recursively expanding every
/// vertex below depth `d`.
pub fn reference_unroll(g: &Graph, target: VertexId, d: usize) -> BTreeMap<(u32, usize), usize> {
    fn go(g: &Graph, v: VertexId, depth: usize, d: usize, out: &mut BTreeMap<(u32, usize), usize>) {
        *out.entry((v.0, depth)).or_default() += 1;
        if depth < d {
            for &u in g.out_neighbors(v) {
                go(g, u, depth + 1, d, out);
            }
        }
    }
    let mut out = BTreeMap::new();
    go(g, target, 0, d, &mut out);
    out
}

/// Label co-occurrence counts over every walk of exactly `d` arcs.
pub fn reference_walk_counts(g: &Graph, d: usize) -> Vec<Vec<u64>> {
    let l = g.class_count();
    let mut m = vec![vec![0u64; l]; l];
    fn walk(g: &Graph, v: VertexId, left: usize, origin: usize, m: &mut [Vec<u64>]) {
        if left == 0 {
            m[origin][g.label(v).unwrap()] += 1;
            return;
        }
        for &u in g.out_neighbors(v) {
            walk(g, u, left - 1, origin, m);
        }
    }
    for v in g.vertices() {
        walk(g, v, d, g.label(v).unwrap(), &mut m);
    }
    m
}

/// Unrolled tree in nested form: vertex plus children, for structural
/// comparison with a recursive oracle.
#[derive(Debug, PartialEq, Eq)]
pub struct Nested(pub u32, pub Vec<Nested>);

pub fn reference_nested(g: &Graph, v: VertexId, depth: usize, d: usize) -> Nested {
    let kids = if depth < d {
        g.out_neighbors(v).iter().map(|&u| reference_nested(g, u, depth + 1, d)).collect()
    } else {
        Vec::new()
    };
    Nested(v.0, kids)
}

pub fn nested_from_tree(t: &grnn::tree::UnrollTree, id: usize) -> Nested {
    let n = t.node(id);
    Nested(n.vertex.0, n.children.iter().map(|&c| nested_from_tree(t, c)).collect())
}

/// Two well-separated classes whose members link mostly within their class.
pub fn planted_partition(rng: &mut Rng, per_class: usize, classes: usize, f_per_class: usize, p_in: f64, p_out: f64) -> Graph {
    let n = per_class * classes;
    let f = f_per_class * classes;
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for v in 0..n {
        let c = v % classes;
        let mut feats: Vec<u32> = (0..f as u32)
            .filter(|&j| {
                let own = (j as usize) / f_per_class == c;
                rng.coin(if own { 0.3 } else { 0.05 })
            })
            .collect();
        feats.sort_unstable();
        features.push(feats);
        labels.push(Some(c));
    }
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let p = if a % classes == b % classes { p_in } else { p_out };
            if rng.coin(p) {
                edges.push((a, b));
            }
        }
    }
    let names = (0..classes).map(|i| format!("class{i}")).collect();
    Graph::from_parts(f, names, features, labels, &edges, EdgeMode::Undirected).unwrap()
}
