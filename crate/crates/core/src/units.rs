//! Recursive neural units applied at every node of an unrolled tree.
//!
//! Both unit types read the node's sparse binary feature vector `x` and the
//! states of its children. Child hidden states are first pooled into `h̃`:
//!
//! * naive unit: `h = tanh(W x + U h̃ + b)`
//! * LSTM unit: gates `i, o, u` read `(x, h̃)`, while one forget gate per
//!   child reads that child's own `h_r`:
//!   `c = i ⊙ u + Σ_r f_r ⊙ c_r`, `h = o ⊙ tanh(c)`.
//!
//! Leaves pool to the zero vector and sum over an empty child set.
//! Backward passes accumulate into caller-provided gradient buffers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::numerics::{glorot_init, sigmoid_scalar, Matrix, Rng, Scalar, Vector};
use crate::params::{prefixed, ParamSet, Tensor, TensorMut};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Sum,
    Mean,
    #[default]
    Max,
}

impl Pooling {
    pub const ALL: [Pooling; 3] = [Pooling::Sum, Pooling::Mean, Pooling::Max];

    pub fn as_str(self) -> &'static str {
        match self {
            Pooling::Sum => "sum",
            Pooling::Mean => "mean",
            Pooling::Max => "max",
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pooling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "sum" => Ok(Pooling::Sum),
            "mean" => Ok(Pooling::Mean),
            "max" => Ok(Pooling::Max),
            other => Err(Error::Config(format!("unknown pooling `{other}`"))),
        }
    }
}

/// Pooled child state plus what the backward pass needs to route gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Pooled<T> {
    pub value: Vector<T>,
    pub child_count: usize,
    /// For max pooling: winning child position per dimension.
    pub argmax: Vec<usize>,
}

/// Pools child hidden states elementwise. No children gives zeros; max ties
/// go to the earliest child.
pub fn pool<T: Scalar>(children: &[&[T]], strategy: Pooling, hidden: usize) -> Pooled<T> {
    for c in children {
        assert_eq!(c.len(), hidden, "pool: child state length != hidden size");
    }
    let mut value = Vector::zeros(hidden);
    let mut argmax = Vec::new();
    if children.is_empty() {
        return Pooled { value, child_count: 0, argmax };
    }
    match strategy {
        Pooling::Sum | Pooling::Mean => {
            for c in children {
                value.add_assign(c);
            }
            if strategy == Pooling::Mean {
                let n = T::from_usize(children.len()).unwrap();
                value.iter_mut().for_each(|v| *v /= n);
            }
        }
        Pooling::Max => {
            argmax = vec![0; hidden];
            value.0.copy_from_slice(children[0]);
            for (r, c) in children.iter().enumerate().skip(1) {
                for k in 0..hidden {
                    if c[k] > value[k] {
                        value[k] = c[k];
                        argmax[k] = r;
                    }
                }
            }
        }
    }
    Pooled { value, child_count: children.len(), argmax }
}

/// Adds `∂L/∂h_r` implied by `grad` (= `∂L/∂h̃`) into each child's buffer.
pub fn pool_backward<T: Scalar>(grad: &[T], pooled: &Pooled<T>, strategy: Pooling, child_grads: &mut [Vector<T>]) {
    assert_eq!(child_grads.len(), pooled.child_count, "pool_backward: child count mismatch");
    if pooled.child_count == 0 {
        return;
    }
    match strategy {
        Pooling::Sum => {
            for cg in child_grads.iter_mut() {
                cg.add_assign(grad);
            }
        }
        Pooling::Mean => {
            let scale = T::one() / T::from_usize(pooled.child_count).unwrap();
            for cg in child_grads.iter_mut() {
                cg.axpy(scale, grad);
            }
        }
        Pooling::Max => {
            for (k, &g) in grad.iter().enumerate() {
                child_grads[pooled.argmax[k]][k] += g;
            }
        }
    }
}

/// One affine pre-activation `W x + U h + b` with sparse binary `x`.
///
/// `w` is stored feature-major (`F × H`): row `j` is the column of `W`
/// belonging to feature `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine<T> {
    pub w: Matrix<T>,
    pub u: Matrix<T>,
    pub b: Vector<T>,
}

impl<T: Scalar> Affine<T> {
    pub fn zeros(feature_dim: usize, hidden: usize) -> Self {
        Self {
            w: Matrix::zeros(feature_dim, hidden),
            u: Matrix::zeros(hidden, hidden),
            b: Vector::zeros(hidden),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(feature_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            w: glorot_init(feature_dim, hidden, rng),
            u: glorot_init(hidden, hidden, rng),
            b: Vector::zeros(hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.w.rows()
    }

    /// `W x + b`
    pub fn input_part(&self, x: &[u32]) -> Vector<T> {
        let mut out = self.b.clone();
        self.w.gather_rows_add(x, &mut out);
        out
    }

    /// `W x + U h + b`
    pub fn apply(&self, x: &[u32], h: &[T]) -> Vector<T> {
        let mut out = self.input_part(x);
        self.u.matvec_add(h, &mut out);
        out
    }

    /// Accumulates parameter gradients for a pre-activation gradient `dpre`.
    pub fn accumulate(&self, grads: &mut Affine<T>, dpre: &[T], x: &[u32], h: &[T]) {
        grads.w.scatter_rows_add(x, dpre);
        grads.u.add_outer(dpre, h);
        grads.b.add_assign(dpre);
    }

    fn push_tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a, T>>) {
        out.push(Tensor {
            name: prefixed(prefix, "W"),
            rows: self.w.rows(),
            cols: self.w.cols(),
            data: self.w.as_slice(),
            feature_rows: true,
        });
        out.push(Tensor {
            name: prefixed(prefix, "U"),
            rows: self.u.rows(),
            cols: self.u.cols(),
            data: self.u.as_slice(),
            feature_rows: false,
        });
        out.push(Tensor {
            name: prefixed(prefix, "b"),
            rows: 1,
            cols: self.b.len(),
            data: &self.b,
            feature_rows: false,
        });
    }

    fn push_tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a, T>>) {
        let (wr, wc) = (self.w.rows(), self.w.cols());
        let (ur, uc) = (self.u.rows(), self.u.cols());
        out.push(TensorMut {
            name: prefixed(prefix, "W"),
            rows: wr,
            cols: wc,
            data: self.w.as_mut_slice(),
            feature_rows: true,
        });
        out.push(TensorMut {
            name: prefixed(prefix, "U"),
            rows: ur,
            cols: uc,
            data: self.u.as_mut_slice(),
            feature_rows: false,
        });
        let bl = self.b.len();
        out.push(TensorMut {
            name: prefixed(prefix, "b"),
            rows: 1,
            cols: bl,
            data: &mut self.b,
            feature_rows: false,
        });
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NrnuParams<T> {
    pub h: Affine<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmuParams<T> {
    pub i: Affine<T>,
    pub f: Affine<T>,
    pub o: Affine<T>,
    pub u: Affine<T>,
}

impl<T: Scalar> NrnuParams<T> {
    pub fn zeros(feature_dim: usize, hidden: usize) -> Self {
        Self { h: Affine::zeros(feature_dim, hidden) }
    }

    pub fn glorot(feature_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self { h: Affine::glorot(feature_dim, hidden, rng) }
    }
}

impl<T: Scalar> LstmuParams<T> {
    pub fn zeros(feature_dim: usize, hidden: usize) -> Self {
        Self {
            i: Affine::zeros(feature_dim, hidden),
            f: Affine::zeros(feature_dim, hidden),
            o: Affine::zeros(feature_dim, hidden),
            u: Affine::zeros(feature_dim, hidden),
        }
    }

    pub fn glorot(feature_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            i: Affine::glorot(feature_dim, hidden, rng),
            f: Affine::glorot(feature_dim, hidden, rng),
            o: Affine::glorot(feature_dim, hidden, rng),
            u: Affine::glorot(feature_dim, hidden, rng),
        }
    }

    fn gates(&self) -> [(&'static str, &Affine<T>); 4] {
        [("i", &self.i), ("f", &self.f), ("o", &self.o), ("u", &self.u)]
    }
}

impl<T: Scalar> ParamSet<T> for NrnuParams<T> {
    fn tensors(&self) -> Vec<Tensor<'_, T>> {
        let mut out = Vec::new();
        self.h.push_tensors("h", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_, T>> {
        let mut out = Vec::new();
        self.h.push_tensors_mut("h", &mut out);
        out
    }
}

impl<T: Scalar> ParamSet<T> for LstmuParams<T> {
    fn tensors(&self) -> Vec<Tensor<'_, T>> {
        let mut out = Vec::new();
        for (name, gate) in self.gates() {
            gate.push_tensors(name, &mut out);
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_, T>> {
        let mut out = Vec::new();
        self.i.push_tensors_mut("i", &mut out);
        self.f.push_tensors_mut("f", &mut out);
        self.o.push_tensors_mut("o", &mut out);
        self.u.push_tensors_mut("u", &mut out);
        out
    }
}

/// LSTM-specific forward quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmGates<T> {
    pub i: Vector<T>,
    pub o: Vector<T>,
    pub u: Vector<T>,
    pub c: Vector<T>,
    /// One forget gate per child, in child order.
    pub f: Vec<Vector<T>>,
}

/// Forward trace of one node, kept for backpropagation.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeActivation<T> {
    pub h: Vector<T>,
    pub pooled: Pooled<T>,
    pub lstm: Option<LstmGates<T>>,
}

impl<T: Scalar> NodeActivation<T> {
    /// Memory cell, or `None` for the naive unit.
    pub fn cell(&self) -> Option<&[T]> {
        self.lstm.as_ref().map(|g| &g.c[..])
    }
}

fn map<T: Scalar>(v: &mut [T], f: impl Fn(T) -> T) {
    v.iter_mut().for_each(|x| *x = f(*x));
}

pub fn nrnu_forward<T: Scalar>(p: &NrnuParams<T>, x: &[u32], pooled: Pooled<T>) -> NodeActivation<T> {
    let mut h = p.h.apply(x, &pooled.value);
    map(&mut h, T::tanh);
    NodeActivation { h, pooled, lstm: None }
}

/// Naive-unit backward. Adds parameter gradients into `grads` and
/// `∂L/∂h_r` into `child_grad_h`.
pub fn nrnu_backward<T: Scalar>(
    p: &NrnuParams<T>,
    x: &[u32],
    act: &NodeActivation<T>,
    grad_h: &[T],
    pooling: Pooling,
    grads: &mut NrnuParams<T>,
    child_grad_h: &mut [Vector<T>],
) {
    let dpre = Vector::from_fn(grad_h.len(), |k| grad_h[k] * (T::one() - act.h[k] * act.h[k]));
    p.h.accumulate(&mut grads.h, &dpre, x, &act.pooled.value);
    if act.pooled.child_count > 0 {
        let mut dpooled = Vector::zeros(dpre.len());
        p.h.u.tr_matvec_add(&dpre, &mut dpooled);
        pool_backward(&dpooled, &act.pooled, pooling, child_grad_h);
    }
}

/// LSTM-unit forward over `children = [(h_r, c_r)]`.
pub fn lstmu_forward<T: Scalar>(
    p: &LstmuParams<T>,
    x: &[u32],
    children: &[(&[T], &[T])],
    pooling: Pooling,
) -> NodeActivation<T> {
    let hidden = p.i.hidden();
    let child_h: Vec<&[T]> = children.iter().map(|(h, _)| *h).collect();
    let pooled = pool(&child_h, pooling, hidden);

    let mut i = p.i.apply(x, &pooled.value);
    map(&mut i, sigmoid_scalar);
    let mut o = p.o.apply(x, &pooled.value);
    map(&mut o, sigmoid_scalar);
    let mut u = p.u.apply(x, &pooled.value);
    map(&mut u, T::tanh);

    let mut c = Vector::from_fn(hidden, |k| i[k] * u[k]);
    let f_base = p.f.input_part(x);
    let mut f = Vec::with_capacity(children.len());
    for &(h_r, c_r) in children {
        assert_eq!(c_r.len(), hidden, "lstmu: child cell length != hidden size");
        let mut f_r = f_base.clone();
        p.f.u.matvec_add(h_r, &mut f_r);
        map(&mut f_r, sigmoid_scalar);
        for k in 0..hidden {
            c[k] += f_r[k] * c_r[k];
        }
        f.push(f_r);
    }
    let h = Vector::from_fn(hidden, |k| o[k] * c[k].tanh());
    NodeActivation {
        h,
        pooled,
        lstm: Some(LstmGates { i, o, u, c, f }),
    }
}

/// LSTM-unit backward. `grad_c` is the gradient arriving at this node's
/// memory cell from its parent (zero at the root).
#[allow(clippy::too_many_arguments)]
pub fn lstmu_backward<T: Scalar>(
    p: &LstmuParams<T>,
    x: &[u32],
    children: &[(&[T], &[T])],
    act: &NodeActivation<T>,
    grad_h: &[T],
    grad_c: &[T],
    pooling: Pooling,
    grads: &mut LstmuParams<T>,
    child_grad_h: &mut [Vector<T>],
    child_grad_c: &mut [Vector<T>],
) {
    let gates = act.lstm.as_ref().expect("lstmu_backward needs an LSTM trace");
    let hidden = grad_h.len();
    let one = T::one();
    assert_eq!(children.len(), gates.f.len(), "lstmu_backward: trace/children mismatch");
    assert_eq!(child_grad_c.len(), children.len());

    let mut dpre_o = Vector::zeros(hidden);
    let mut dc = Vector::zeros(hidden);
    for k in 0..hidden {
        let tc = gates.c[k].tanh();
        dpre_o[k] = grad_h[k] * tc * gates.o[k] * (one - gates.o[k]);
        dc[k] = grad_c[k] + grad_h[k] * gates.o[k] * (one - tc * tc);
    }
    let dpre_i = Vector::from_fn(hidden, |k| dc[k] * gates.u[k] * gates.i[k] * (one - gates.i[k]));
    let dpre_u = Vector::from_fn(hidden, |k| dc[k] * gates.i[k] * (one - gates.u[k] * gates.u[k]));

    let h_tilde = &act.pooled.value;
    p.i.accumulate(&mut grads.i, &dpre_i, x, h_tilde);
    p.o.accumulate(&mut grads.o, &dpre_o, x, h_tilde);
    p.u.accumulate(&mut grads.u, &dpre_u, x, h_tilde);

    for (r, &(h_r, c_r)) in children.iter().enumerate() {
        let f_r = &gates.f[r];
        let dpre_f = Vector::from_fn(hidden, |k| dc[k] * c_r[k] * f_r[k] * (one - f_r[k]));
        p.f.accumulate(&mut grads.f, &dpre_f, x, h_r);
        p.f.u.tr_matvec_add(&dpre_f, &mut child_grad_h[r]);
        for k in 0..hidden {
            child_grad_c[r][k] += dc[k] * f_r[k];
        }
    }

    if !children.is_empty() {
        let mut dpooled = Vector::zeros(hidden);
        p.i.u.tr_matvec_add(&dpre_i, &mut dpooled);
        p.o.u.tr_matvec_add(&dpre_o, &mut dpooled);
        p.u.u.tr_matvec_add(&dpre_u, &mut dpooled);
        pool_backward(&dpooled, &act.pooled, pooling, child_grad_h);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::numerics::Rng;

    fn rand_affine(f: usize, h: usize, rng: &mut Rng) -> Affine<f64> {
        let mut m = |r, c| Matrix::from_vec(r, c, (0..r * c).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let w = m(f, h);
        let u = m(h, h);
        let b = Vector::from_fn(h, |_| rng.uniform(-0.5, 0.5));
        Affine { w, u, b }
    }

    fn rand_lstm(f: usize, h: usize, rng: &mut Rng) -> LstmuParams<f64> {
        LstmuParams {
            i: rand_affine(f, h, rng),
            f: rand_affine(f, h, rng),
            o: rand_affine(f, h, rng),
            u: rand_affine(f, h, rng),
        }
    }

    /// Scalar-by-scalar `W x + U h + b` with `W` in math (H×F) orientation.
    fn scalar_affine(a: &Affine<f64>, x: &[u32], h: &[f64], k: usize) -> f64 {
        let mut s = a.b[k];
        for &j in x {
            s += a.w[(j as usize, k)];
        }
        for (m, hm) in h.iter().enumerate() {
            s += a.u[(k, m)] * hm;
        }
        s
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn pool_examples() {
        let one: &[f64] = &[0.2, -0.5];
        for s in Pooling::ALL {
            assert_eq!(pool(&[one], s, 2).value.0, vec![0.2, -0.5]);
        }
        let p = pool::<f64>(&[&[1.0, -2.0], &[0.0, 3.0]], Pooling::Max, 2);
        assert_eq!(p.value.0, vec![1.0, 3.0]);
        assert_eq!(p.argmax, vec![0, 1]);
        let leaf = pool::<f64>(&[], Pooling::Max, 3);
        assert_eq!(leaf.value.0, vec![0.0; 3]);
    }

    #[test]
    fn max_pool_ties_go_to_first_child() {
        let p = pool::<f64>(&[&[1.0], &[1.0]], Pooling::Max, 1);
        assert_eq!(p.argmax, vec![0]);
    }

    #[test]
    #[should_panic(expected = "pool")]
    fn pool_length_mismatch_panics() {
        pool::<f64>(&[&[1.0, 2.0], &[1.0]], Pooling::Sum, 2);
    }

    #[test]
    fn nrnu_zero_params_give_zero_state() {
        let p = NrnuParams::<f64>::zeros(4, 3);
        let act = nrnu_forward(&p, &[0, 2], pool(&[], Pooling::Max, 3));
        assert_eq!(act.h.0, vec![0.0; 3]);
    }

    #[test]
    fn nrnu_identity_pass_through() {
        let mut p = NrnuParams::<f64>::zeros(2, 2);
        p.h.u = Matrix::identity(2);
        let child: &[f64] = &[0.3, -1.2];
        let act = nrnu_forward(&p, &[1], pool(&[child], Pooling::Mean, 2));
        assert_eq!(act.h.0, vec![0.3f64.tanh(), (-1.2f64).tanh()]);
    }

    #[test]
    fn nrnu_matches_scalar_recomputation() {
        let mut rng = Rng::seed_from(17);
        let p = NrnuParams { h: rand_affine(4, 3, &mut rng) };
        let kids: Vec<Vec<f64>> = (0..2).map(|_| (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect();
        let refs: Vec<&[f64]> = kids.iter().map(|v| &v[..]).collect();
        let x = [0u32, 3];
        let act = nrnu_forward(&p, &x, pool(&refs, Pooling::Max, 3));
        let pooled: Vec<f64> = (0..3).map(|m| kids[0][m].max(kids[1][m])).collect();
        for k in 0..3 {
            let want = scalar_affine(&p.h, &x, &pooled, k).tanh();
            assert!((act.h[k] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn lstm_leaf_with_zero_params() {
        let p = LstmuParams::<f64>::zeros(3, 2);
        let act = lstmu_forward(&p, &[0], &[], Pooling::Max);
        let g = act.lstm.unwrap();
        assert_eq!(g.i.0, vec![0.5, 0.5]);
        assert_eq!(g.o.0, vec![0.5, 0.5]);
        assert_eq!(g.u.0, vec![0.0, 0.0]);
        assert_eq!(g.c.0, vec![0.0, 0.0]);
        assert_eq!(act.h.0, vec![0.0, 0.0]);

        let mut p = LstmuParams::<f64>::zeros(3, 2);
        p.o.b = Vector(vec![50.0, 50.0]);
        let act = lstmu_forward(&p, &[0], &[], Pooling::Max);
        assert_eq!(act.h.0, vec![0.0, 0.0]);
    }

    #[test]
    fn lstm_matches_scalar_recomputation() {
        let mut rng = Rng::seed_from(99);
        let (f, h) = (3, 2);
        let p = rand_lstm(f, h, &mut rng);
        let h_r: Vec<f64> = (0..h).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let c_r: Vec<f64> = (0..h).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let x = [1u32, 2];
        let act = lstmu_forward(&p, &x, &[(&h_r, &c_r)], Pooling::Max);
        for k in 0..h {
            let i = sig(scalar_affine(&p.i, &x, &h_r, k));
            let o = sig(scalar_affine(&p.o, &x, &h_r, k));
            let u = scalar_affine(&p.u, &x, &h_r, k).tanh();
            let fk = sig(scalar_affine(&p.f, &x, &h_r, k));
            let c = i * u + fk * c_r[k];
            let hk = o * c.tanh();
            assert!((act.h[k] - hk).abs() < 1e-14, "h[{k}]");
            assert!((act.lstm.as_ref().unwrap().c[k] - c).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = Rng::seed_from(5);
        let p = rand_lstm(3, 2, &mut rng);
        let h_r = [0.1, -0.4];
        let c_r = [0.3, 0.2];
        let kids: [(&[f64], &[f64]); 1] = [(&h_r, &c_r)];
        let act = lstmu_forward(&p, &[0, 1], &kids, Pooling::Sum);
        let mut grads = LstmuParams::zeros(3, 2);
        let mut gh = vec![Vector::zeros(2)];
        let mut gc = vec![Vector::zeros(2)];
        lstmu_backward(&p, &[0, 1], &kids, &act, &[0.0, 0.0], &[0.0, 0.0], Pooling::Sum, &mut grads, &mut gh, &mut gc);
        assert!(grads.tensors().iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
        assert_eq!(gh[0].0, vec![0.0, 0.0]);
        assert_eq!(gc[0].0, vec![0.0, 0.0]);

        let np = NrnuParams { h: rand_affine(3, 2, &mut rng) };
        let nact = nrnu_forward(&np, &[2], pool(&[&h_r[..]], Pooling::Max, 2));
        let mut ng = NrnuParams::zeros(3, 2);
        let mut ngh = vec![Vector::zeros(2)];
        nrnu_backward(&np, &[2], &nact, &[0.0, 0.0], Pooling::Max, &mut ng, &mut ngh);
        assert!(ng.tensors().iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
    }

    /// Loss `Σ_k a_k h_k + Σ_k b_k c_k` of a single LSTM node, used to
    /// check the unit backward against central differences.
    fn lstm_probe(p: &LstmuParams<f64>, x: &[u32], kids: &[(&[f64], &[f64])], a: &[f64], b: &[f64], pooling: Pooling) -> f64 {
        let act = lstmu_forward(p, x, kids, pooling);
        let c = &act.lstm.as_ref().unwrap().c;
        (0..a.len()).map(|k| a[k] * act.h[k] + b[k] * c[k]).sum()
    }

    #[test]
    fn lstm_leaf_gradient_matches_finite_differences() {
        let mut rng = Rng::seed_from(2024);
        let p = rand_lstm(2, 2, &mut rng);
        let x = [0u32, 1];
        let a = [0.7, -1.3];
        let b = [0.4, 0.9];
        let act = lstmu_forward(&p, &x, &[], Pooling::Max);
        let mut grads = LstmuParams::zeros(2, 2);
        lstmu_backward(&p, &x, &[], &act, &a, &b, Pooling::Max, &mut grads, &mut [], &mut []);

        let eps = 1e-5;
        let analytic: Vec<f64> = grads.tensors().iter().flat_map(|t| t.data.to_vec()).collect();
        let mut idx = 0;
        let n_tensors = p.tensors().len();
        for t in 0..n_tensors {
            let len = p.tensors()[t].data.len();
            for e in 0..len {
                let mut plus = p.clone();
                plus.tensors_mut()[t].data[e] += eps;
                let mut minus = p.clone();
                minus.tensors_mut()[t].data[e] -= eps;
                let fd = (lstm_probe(&plus, &x, &[], &a, &b, Pooling::Max) - lstm_probe(&minus, &x, &[], &a, &b, Pooling::Max)) / (2.0 * eps);
                assert!((fd - analytic[idx]).abs() < 1e-6, "tensor {t} entry {e}: fd {fd} vs {}", analytic[idx]);
                idx += 1;
            }
        }
    }

    #[test]
    fn lstm_child_state_gradients_match_finite_differences() {
        let mut rng = Rng::seed_from(31337);
        let (f, h) = (3, 3);
        let p = rand_lstm(f, h, &mut rng);
        let x = [2u32];
        let a: Vec<f64> = (0..h).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..h).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let states: Vec<Vec<f64>> = (0..4).map(|_| (0..h).map(|_| rng.uniform(-0.9, 0.9)).collect()).collect();
        for pooling in Pooling::ALL {
            let kids: Vec<(&[f64], &[f64])> = vec![(&states[0], &states[1]), (&states[2], &states[3])];
            let act = lstmu_forward(&p, &x, &kids, pooling);
            let mut grads = LstmuParams::zeros(f, h);
            let mut gh = vec![Vector::zeros(h), Vector::zeros(h)];
            let mut gc = vec![Vector::zeros(h), Vector::zeros(h)];
            lstmu_backward(&p, &x, &kids, &act, &a, &b, pooling, &mut grads, &mut gh, &mut gc);
            let eps = 1e-5;
            for s in 0..4 {
                for k in 0..h {
                    let perturbed = |delta: f64| {
                        let mut st = states.clone();
                        st[s][k] += delta;
                        let kids: Vec<(&[f64], &[f64])> = vec![(&st[0], &st[1]), (&st[2], &st[3])];
                        lstm_probe(&p, &x, &kids, &a, &b, pooling)
                    };
                    let fd = (perturbed(eps) - perturbed(-eps)) / (2.0 * eps);
                    let an = match s {
                        0 => gh[0][k],
                        1 => gc[0][k],
                        2 => gh[1][k],
                        _ => gc[1][k],
                    };
                    assert!((fd - an).abs() < 1e-6, "{pooling} state {s} dim {k}: fd {fd} vs {an}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn gates_stay_in_range(seed in any::<u64>(), n_kids in 0usize..4, pooling in 0usize..3) {
            let mut rng = Rng::seed_from(seed);
            let p = rand_lstm(5, 4, &mut rng);
            let states: Vec<Vec<f64>> = (0..2 * n_kids).map(|_| (0..4).map(|_| rng.uniform(-3.0, 3.0)).collect()).collect();
            let kids: Vec<(&[f64], &[f64])> = (0..n_kids).map(|r| (&states[2 * r][..], &states[2 * r + 1][..])).collect();
            let act = lstmu_forward(&p, &[0, 4], &kids, Pooling::ALL[pooling]);
            let g = act.lstm.unwrap();
            let unit = |v: &f64| *v > 0.0 && *v < 1.0;
            let sym = |v: &f64| *v > -1.0 && *v < 1.0;
            prop_assert!(g.i.iter().all(unit));
            prop_assert!(g.o.iter().all(unit));
            prop_assert!(g.f.iter().all(|f| f.iter().all(unit)));
            prop_assert!(g.u.iter().all(sym));
            prop_assert!(g.c.iter().map(|c| c.tanh()).all(|t| sym(&t)));
            prop_assert!(act.h.iter().all(sym));
        }

        #[test]
        fn pooling_is_permutation_invariant(seed in any::<u64>(), n in 1usize..5) {
            let mut rng = Rng::seed_from(seed);
            let states: Vec<Vec<f64>> = (0..2 * n).map(|_| (0..3).map(|_| rng.uniform(-2.0, 2.0)).collect()).collect();
            let p = rand_lstm(2, 3, &mut rng);
            let np = NrnuParams { h: rand_affine(2, 3, &mut rng) };
            let mut order: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut order);
            for pooling in Pooling::ALL {
                let kids: Vec<(&[f64], &[f64])> = (0..n).map(|r| (&states[2 * r][..], &states[2 * r + 1][..])).collect();
                let perm: Vec<(&[f64], &[f64])> = order.iter().map(|&r| kids[r]).collect();
                let a = lstmu_forward(&p, &[1], &kids, pooling);
                let b = lstmu_forward(&p, &[1], &perm, pooling);
                for k in 0..3 {
                    prop_assert!((a.h[k] - b.h[k]).abs() < 1e-12);
                    prop_assert!((a.pooled.value[k] - b.pooled.value[k]).abs() < 1e-12);
                }
                let hs: Vec<&[f64]> = kids.iter().map(|k| k.0).collect();
                let hp: Vec<&[f64]> = perm.iter().map(|k| k.0).collect();
                let na = nrnu_forward(&np, &[0], pool(&hs, pooling, 3));
                let nb = nrnu_forward(&np, &[0], pool(&hp, pooling, 3));
                for k in 0..3 {
                    prop_assert!((na.h[k] - nb.h[k]).abs() < 1e-12);
                }
            }
        }
    }
}
