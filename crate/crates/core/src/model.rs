//! The tree-structured classifier: recursive units evaluated leaves-to-root
//! over an [`UnrollTree`], a softmax head on the root state, cross-entropy
//! loss, and backpropagation through the tree into the shared parameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numerics::{argmax, glorot_init, softmax, Matrix, Rng, Scalar, Vector};
use crate::params::{prefixed, ParamSet, Tensor, TensorMut};
use crate::tree::UnrollTree;
use crate::units::{
    lstmu_backward, lstmu_forward, nrnu_backward, nrnu_forward, pool, LstmuParams, NodeActivation, NrnuParams,
    Pooling,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Nrnu,
    #[default]
    Lstm,
}

impl UnitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            UnitKind::Nrnu => "nrnu",
            UnitKind::Lstm => "lstm",
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UnitKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nrnu" | "naive" => Ok(UnitKind::Nrnu),
            "lstm" | "lstmu" => Ok(UnitKind::Lstm),
            other => Err(Error::Config(format!("unknown unit `{other}`"))),
        }
    }
}

/// Architecture of a model; everything except the learned values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub unit: UnitKind,
    pub pooling: Pooling,
    pub hidden: usize,
    pub depth: usize,
    pub class_count: usize,
    pub feature_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum UnitParams<T> {
    Nrnu(NrnuParams<T>),
    Lstm(LstmuParams<T>),
}

impl<T: Scalar> ParamSet<T> for UnitParams<T> {
    fn tensors(&self) -> Vec<Tensor<'_, T>> {
        match self {
            UnitParams::Nrnu(p) => p.tensors(),
            UnitParams::Lstm(p) => p.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_, T>> {
        match self {
            UnitParams::Nrnu(p) => p.tensors_mut(),
            UnitParams::Lstm(p) => p.tensors_mut(),
        }
    }
}

/// Softmax head `W_s h + b_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier<T> {
    pub w: Matrix<T>,
    pub b: Vector<T>,
}

/// Every learned tensor of a model. Gradients and optimizer accumulators
/// share this layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub unit: UnitParams<T>,
    pub classifier: Classifier<T>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let (f, h) = (config.feature_dim, config.hidden);
        let unit = match config.unit {
            UnitKind::Nrnu => UnitParams::Nrnu(NrnuParams::zeros(f, h)),
            UnitKind::Lstm => UnitParams::Lstm(LstmuParams::zeros(f, h)),
        };
        Self {
            unit,
            classifier: Classifier {
                w: Matrix::zeros(config.class_count, h),
                b: Vector::zeros(config.class_count),
            },
        }
    }

    /// Glorot-uniform weight matrices, zero biases.
    pub fn glorot(config: &ModelConfig, rng: &mut Rng) -> Self {
        let (f, h) = (config.feature_dim, config.hidden);
        let unit = match config.unit {
            UnitKind::Nrnu => UnitParams::Nrnu(NrnuParams::glorot(f, h, rng)),
            UnitKind::Lstm => UnitParams::Lstm(LstmuParams::glorot(f, h, rng)),
        };
        Self {
            unit,
            classifier: Classifier {
                w: glorot_init(config.class_count, h, rng),
                b: Vector::zeros(config.class_count),
            },
        }
    }
}

impl<T: Scalar> ParamSet<T> for Params<T> {
    fn tensors(&self) -> Vec<Tensor<'_, T>> {
        let mut out: Vec<Tensor<'_, T>> = self
            .unit
            .tensors()
            .into_iter()
            .map(|t| Tensor { name: prefixed("unit", &t.name), ..t })
            .collect();
        out.push(Tensor {
            name: "classifier.W".into(),
            rows: self.classifier.w.rows(),
            cols: self.classifier.w.cols(),
            data: self.classifier.w.as_slice(),
            feature_rows: false,
        });
        out.push(Tensor {
            name: "classifier.b".into(),
            rows: 1,
            cols: self.classifier.b.len(),
            data: &self.classifier.b,
            feature_rows: false,
        });
        out
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_, T>> {
        let mut out: Vec<TensorMut<'_, T>> = self
            .unit
            .tensors_mut()
            .into_iter()
            .map(|t| TensorMut { name: prefixed("unit", &t.name), ..t })
            .collect();
        let (r, c) = (self.classifier.w.rows(), self.classifier.w.cols());
        out.push(TensorMut {
            name: "classifier.W".into(),
            rows: r,
            cols: c,
            data: self.classifier.w.as_mut_slice(),
            feature_rows: false,
        });
        let l = self.classifier.b.len();
        out.push(TensorMut {
            name: "classifier.b".into(),
            rows: 1,
            cols: l,
            data: &mut self.classifier.b,
            feature_rows: false,
        });
        out
    }
}

/// Gradient buffers plus the feature rows that received any gradient.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub params: Params<T>,
    /// Feature indices whose input-weight rows may be nonzero (unsorted,
    /// possibly repeated).
    pub touched: Vec<u32>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            params: Params::zeros(config),
            touched: Vec::new(),
        }
    }

    /// Resets to zero, visiting only rows that can be nonzero.
    pub fn clear(&mut self) {
        self.touched.sort_unstable();
        self.touched.dedup();
        for t in self.params.tensors_mut() {
            if t.feature_rows {
                for &r in &self.touched {
                    let r = r as usize;
                    t.data[r * t.cols..(r + 1) * t.cols].iter_mut().for_each(|v| *v = T::zero());
                }
            } else {
                t.data.iter_mut().for_each(|v| *v = T::zero());
            }
        }
        self.touched.clear();
    }

    /// Sorted, deduplicated touched rows.
    pub fn touched_rows(&mut self) -> &[u32] {
        self.touched.sort_unstable();
        self.touched.dedup();
        &self.touched
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<T> {
    pub probs: Vector<T>,
    pub label: usize,
}

/// Per-node forward traces, indexed by tree node id.
#[derive(Clone, Debug)]
pub struct TreeTrace<T> {
    pub activations: Vec<NodeActivation<T>>,
}

impl<T: Scalar> TreeTrace<T> {
    pub fn root_hidden(&self) -> &Vector<T> {
        &self.activations[0].h
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrnnModel<T> {
    pub config: ModelConfig,
    pub params: Params<T>,
}

impl<T: Scalar> GrnnModel<T> {
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Self {
        Self {
            params: Params::glorot(&config, rng),
            config,
        }
    }

    pub fn zeros(config: ModelConfig) -> Self {
        Self {
            params: Params::zeros(&config),
            config,
        }
    }

    fn check_tree(&self, g: &Graph, t: &UnrollTree) {
        assert_eq!(
            g.feature_dim(),
            self.config.feature_dim,
            "graph feature dim does not match model"
        );
        assert_eq!(t.depth_limit(), self.config.depth, "tree depth does not match model depth");
    }

    /// Evaluates every node leaves-to-root.
    pub fn forward_tree(&self, g: &Graph, t: &UnrollTree) -> TreeTrace<T> {
        self.check_tree(g, t);
        let hidden = self.config.hidden;
        let pooling = self.config.pooling;
        let mut acts: Vec<Option<NodeActivation<T>>> = vec![None; t.len()];
        for id in t.postorder() {
            let node = t.node(id);
            let x = g.features(node.vertex);
            let act = match &self.params.unit {
                UnitParams::Nrnu(p) => {
                    let kids: Vec<&[T]> = node
                        .children
                        .iter()
                        .map(|&c| &acts[c].as_ref().expect("child evaluated first").h[..])
                        .collect();
                    nrnu_forward(p, x, pool(&kids, pooling, hidden))
                }
                UnitParams::Lstm(p) => {
                    let kids: Vec<(&[T], &[T])> = node
                        .children
                        .iter()
                        .map(|&c| {
                            let a = acts[c].as_ref().expect("child evaluated first");
                            (&a.h[..], a.cell().expect("LSTM trace"))
                        })
                        .collect();
                    lstmu_forward(p, x, &kids, pooling)
                }
            };
            acts[id] = Some(act);
        }
        TreeTrace {
            activations: acts.into_iter().map(|a| a.expect("every node visited")).collect(),
        }
    }

    fn logits(&self, h: &[T]) -> Vector<T> {
        let mut z = self.params.classifier.b.clone();
        self.params.classifier.w.matvec_add(h, &mut z);
        z
    }

    pub fn predict(&self, h: &[T]) -> Prediction<T> {
        assert_eq!(h.len(), self.config.hidden, "root state length != hidden size");
        let probs = softmax(&self.logits(h));
        let label = argmax(&probs);
        Prediction { probs, label }
    }

    pub fn classify(&self, g: &Graph, t: &UnrollTree) -> Prediction<T> {
        let trace = self.forward_tree(g, t);
        self.predict(trace.root_hidden())
    }

    /// Cross-entropy `-log p(y_true)` of one tree.
    pub fn loss(&self, g: &Graph, t: &UnrollTree, y_true: usize) -> T {
        let trace = self.forward_tree(g, t);
        cross_entropy(&self.logits(trace.root_hidden()), y_true)
    }

    /// Loss of one tree and freshly allocated gradients.
    pub fn loss_and_gradients(&self, g: &Graph, t: &UnrollTree, y_true: usize) -> (T, Gradients<T>) {
        let mut grads = Gradients::zeros(&self.config);
        let loss = self.accumulate_gradients(g, t, y_true, &mut grads);
        (loss, grads)
    }

    /// Adds this tree's gradients into `grads` and returns its loss.
    pub fn accumulate_gradients(&self, g: &Graph, t: &UnrollTree, y_true: usize, grads: &mut Gradients<T>) -> T {
        assert!(y_true < self.config.class_count, "label {y_true} out of range");
        let hidden = self.config.hidden;
        let pooling = self.config.pooling;
        let trace = self.forward_tree(g, t);
        let h_root = trace.root_hidden();
        let z = self.logits(h_root);
        let loss = cross_entropy(&z, y_true);

        let mut dz = softmax(&z);
        dz[y_true] -= T::one();
        let cls = &mut grads.params.classifier;
        cls.w.add_outer(&dz, h_root);
        cls.b.add_assign(&dz);

        let n = t.len();
        let mut grad_h: Vec<Vector<T>> = vec![Vector::zeros(hidden); n];
        self.params.classifier.w.tr_matvec_add(&dz, &mut grad_h[0]);
        let mut grad_c: Vec<Vector<T>> = match self.config.unit {
            UnitKind::Lstm => vec![Vector::zeros(hidden); n],
            UnitKind::Nrnu => Vec::new(),
        };

        // Parents precede children in node-id order, so a node's upstream
        // gradient is complete when it is reached.
        for id in 0..n {
            let node = t.node(id);
            let x = g.features(node.vertex);
            grads.touched.extend_from_slice(x);
            let act = &trace.activations[id];
            let k = node.children.len();
            let mut child_h = vec![Vector::zeros(hidden); k];
            match (&self.params.unit, &mut grads.params.unit) {
                (UnitParams::Nrnu(p), UnitParams::Nrnu(gp)) => {
                    nrnu_backward(p, x, act, &grad_h[id], pooling, gp, &mut child_h);
                }
                (UnitParams::Lstm(p), UnitParams::Lstm(gp)) => {
                    let kids: Vec<(&[T], &[T])> = node
                        .children
                        .iter()
                        .map(|&c| {
                            let a = &trace.activations[c];
                            (&a.h[..], a.cell().expect("LSTM trace"))
                        })
                        .collect();
                    let mut child_c = vec![Vector::zeros(hidden); k];
                    lstmu_backward(p, x, &kids, act, &grad_h[id], &grad_c[id], pooling, gp, &mut child_h, &mut child_c);
                    for (&c, gc) in node.children.iter().zip(&child_c) {
                        grad_c[c].add_assign(gc);
                    }
                }
                _ => panic!("gradient buffer unit kind does not match model"),
            }
            for (&c, gh) in node.children.iter().zip(&child_h) {
                grad_h[c].add_assign(gh);
            }
        }
        loss
    }
}

/// `logsumexp(z) - z[y]`
fn cross_entropy<T: Scalar>(z: &[T], y: usize) -> T {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
    lse - z[y]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeMode, VertexId};
    use crate::tree::build_tree;

    fn config(unit: UnitKind, depth: usize) -> ModelConfig {
        ModelConfig {
            unit,
            pooling: Pooling::Max,
            hidden: 2,
            depth,
            class_count: 3,
            feature_dim: 3,
        }
    }

    fn path_graph() -> Graph {
        Graph::from_parts(
            3,
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![0], vec![1, 2], vec![2]],
            vec![Some(0), Some(1), Some(2)],
            &[(0, 1), (0, 2)],
            EdgeMode::Directed,
        )
        .unwrap()
    }

    #[test]
    fn zero_classifier_is_uniform() {
        let m = GrnnModel::<f64>::zeros(config(UnitKind::Nrnu, 0));
        let p = m.predict(&[0.3, -0.2]);
        assert_eq!(p.label, 0);
        for q in p.probs.iter() {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
        let g = path_graph();
        let t = build_tree(&g, VertexId(0), 0).unwrap();
        assert!((m.loss(&g, &t, 1) - 3.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn dominant_bias_wins() {
        let mut m = GrnnModel::<f64>::zeros(config(UnitKind::Nrnu, 0));
        m.params.classifier.b = Vector(vec![0.0, 10.0, 0.0]);
        let p = m.predict(&[0.0, 0.0]);
        assert_eq!(p.label, 1);
        assert!(p.probs[1] > 0.9999);
    }

    #[test]
    fn predict_matches_scalar_softmax() {
        let mut rng = Rng::seed_from(8);
        let m = GrnnModel::<f64>::new(config(UnitKind::Lstm, 1), &mut rng);
        let h = [0.25, -0.75];
        let p = m.predict(&h);
        let w = &m.params.classifier.w;
        let z: Vec<f64> = (0..3).map(|c| w[(c, 0)] * h[0] + w[(c, 1)] * h[1]).collect();
        let total: f64 = z.iter().map(|v| v.exp()).sum();
        for c in 0..3 {
            assert!((p.probs[c] - z[c].exp() / total).abs() < 1e-14);
        }
    }

    #[test]
    fn single_node_tree_is_one_unit_call() {
        let mut rng = Rng::seed_from(4);
        let m = GrnnModel::<f64>::new(config(UnitKind::Lstm, 0), &mut rng);
        let g = path_graph();
        let t = build_tree(&g, VertexId(1), 0).unwrap();
        let trace = m.forward_tree(&g, &t);
        let UnitParams::Lstm(p) = &m.params.unit else { unreachable!() };
        let direct = lstmu_forward(p, g.features(VertexId(1)), &[], Pooling::Max);
        assert_eq!(trace.root_hidden(), &direct.h);
    }

    #[test]
    fn three_node_tree_composes_leaf_and_root_calls() {
        let mut rng = Rng::seed_from(12);
        let m = GrnnModel::<f64>::new(config(UnitKind::Nrnu, 1), &mut rng);
        let g = path_graph();
        let t = build_tree(&g, VertexId(0), 1).unwrap();
        let UnitParams::Nrnu(p) = &m.params.unit else { unreachable!() };
        let leaf1 = nrnu_forward(p, g.features(VertexId(1)), pool(&[], Pooling::Max, 2));
        let leaf2 = nrnu_forward(p, g.features(VertexId(2)), pool(&[], Pooling::Max, 2));
        let root = nrnu_forward(p, g.features(VertexId(0)), pool(&[&leaf1.h[..], &leaf2.h[..]], Pooling::Max, 2));
        assert_eq!(m.forward_tree(&g, &t).root_hidden(), &root.h);
    }

    #[test]
    fn duplicates_share_inputs_but_not_activations() {
        let g = Graph::from_parts(2, vec!["x".into()], vec![vec![0], vec![1]], vec![Some(0); 2], &[(0, 1)], EdgeMode::Undirected)
            .unwrap();
        let t = build_tree(&g, VertexId(0), 2).unwrap();
        assert_eq!(t.node(0).vertex, t.node(2).vertex);
        let mut cfg = config(UnitKind::Nrnu, 2);
        cfg.feature_dim = 2;
        cfg.class_count = 1;
        let m = GrnnModel::<f64>::new(cfg, &mut Rng::seed_from(1));
        let trace = m.forward_tree(&g, &t);
        assert_ne!(trace.activations[0].h, trace.activations[2].h);
    }

    #[test]
    fn loss_is_nonnegative_and_near_zero_when_confident() {
        let mut m = GrnnModel::<f64>::zeros(config(UnitKind::Nrnu, 0));
        m.params.classifier.b = Vector(vec![0.0, 60.0, 0.0]);
        let g = path_graph();
        let t = build_tree(&g, VertexId(0), 0).unwrap();
        let l = m.loss(&g, &t, 1);
        assert!((0.0..1e-20).contains(&l));
    }

    #[test]
    fn clear_resets_touched_rows() {
        let mut rng = Rng::seed_from(3);
        let m = GrnnModel::<f64>::new(config(UnitKind::Lstm, 1), &mut rng);
        let g = path_graph();
        let t = build_tree(&g, VertexId(0), 1).unwrap();
        let (_, mut grads) = m.loss_and_gradients(&g, &t, 2);
        assert_eq!(grads.touched_rows(), &[0, 1, 2]);
        grads.clear();
        assert!(grads.touched.is_empty());
        assert!(grads.params.tensors().iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
    }
}
