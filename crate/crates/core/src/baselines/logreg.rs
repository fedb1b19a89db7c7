//! Multinomial logistic regression over sparse inputs, trained per example
//! with Adagrad.

use crate::graph::Graph;
use crate::numerics::{argmax, softmax, Matrix, Rng, Scalar, Vector};
use crate::params::{ParamSet, Tensor, TensorMut};
use crate::trainer::AdagradState;

/// Sparse input vector as parallel index/value lists.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseRow<T> {
    pub indices: Vec<u32>,
    pub values: Vec<T>,
}

impl<T: Scalar> SparseRow<T> {
    pub fn binary(indices: &[u32]) -> Self {
        Self {
            indices: indices.to_vec(),
            values: vec![T::one(); indices.len()],
        }
    }

    /// Appends dense entries starting at column `offset`, skipping zeros.
    pub fn extend_dense(&mut self, offset: usize, dense: &[T]) {
        for (k, &v) in dense.iter().enumerate() {
            if v != T::zero() {
                self.indices.push((offset + k) as u32);
                self.values.push(v);
            }
        }
    }
}

/// Content-only inputs: each vertex's binary bag of words.
pub fn content_rows<T: Scalar>(g: &Graph) -> Vec<SparseRow<T>> {
    g.vertices().map(|v| SparseRow::binary(g.features(v))).collect()
}

/// `w` is input-major (`D × L`).
#[derive(Clone, Debug, PartialEq)]
pub struct LogRegParams<T> {
    pub w: Matrix<T>,
    pub b: Vector<T>,
}

impl<T: Scalar> LogRegParams<T> {
    pub fn zeros(input_dim: usize, class_count: usize) -> Self {
        Self {
            w: Matrix::zeros(input_dim, class_count),
            b: Vector::zeros(class_count),
        }
    }
}

impl<T: Scalar> ParamSet<T> for LogRegParams<T> {
    fn tensors(&self) -> Vec<Tensor<'_, T>> {
        vec![
            Tensor {
                name: "W".into(),
                rows: self.w.rows(),
                cols: self.w.cols(),
                data: self.w.as_slice(),
                feature_rows: true,
            },
            Tensor {
                name: "b".into(),
                rows: 1,
                cols: self.b.len(),
                data: &self.b,
                feature_rows: false,
            },
        ]
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_, T>> {
        let (r, c) = (self.w.rows(), self.w.cols());
        let l = self.b.len();
        vec![
            TensorMut {
                name: "W".into(),
                rows: r,
                cols: c,
                data: self.w.as_mut_slice(),
                feature_rows: true,
            },
            TensorMut {
                name: "b".into(),
                rows: 1,
                cols: l,
                data: &mut self.b,
                feature_rows: false,
            },
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRegModel<T> {
    pub params: LogRegParams<T>,
}

impl<T: Scalar> LogRegModel<T> {
    pub fn input_dim(&self) -> usize {
        self.params.w.rows()
    }

    pub fn class_count(&self) -> usize {
        self.params.b.len()
    }

    pub fn logits(&self, x: &SparseRow<T>) -> Vector<T> {
        let mut z = self.params.b.clone();
        for (&j, &v) in x.indices.iter().zip(&x.values) {
            z.axpy(v, self.params.w.row(j as usize));
        }
        z
    }

    pub fn predict_proba(&self, x: &SparseRow<T>) -> Vector<T> {
        softmax(&self.logits(x))
    }

    pub fn predict(&self, x: &SparseRow<T>) -> usize {
        argmax(&self.logits(x))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRegConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub shuffle_seed: u64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 10,
            shuffle_seed: 0,
        }
    }
}

/// Fits softmax regression on `rows[i]` for every `i` in `train`,
/// starting from zero weights.
pub fn train_logreg<T: Scalar>(
    rows: &[SparseRow<T>],
    labels: &[usize],
    train: &[usize],
    input_dim: usize,
    class_count: usize,
    cfg: &LogRegConfig,
) -> LogRegModel<T> {
    let mut model = LogRegModel {
        params: LogRegParams::zeros(input_dim, class_count),
    };
    let mut grads = LogRegParams::zeros(input_dim, class_count);
    let mut optim = AdagradState::new(LogRegParams::zeros(input_dim, class_count), T::lit(cfg.learning_rate));
    let mut rng = Rng::seed_from(cfg.shuffle_seed);
    let mut order = train.to_vec();
    let mut touched: Vec<u32> = Vec::new();
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for &i in &order {
            let x = &rows[i];
            let mut dz = model.predict_proba(x);
            dz[labels[i]] -= T::one();
            for (&j, &v) in x.indices.iter().zip(&x.values) {
                grads.w.row_mut(j as usize).iter_mut().zip(dz.iter()).for_each(|(g, &d)| *g += v * d);
            }
            grads.b.add_assign(&dz);
            touched.clear();
            touched.extend_from_slice(&x.indices);
            touched.sort_unstable();
            touched.dedup();
            optim.step(&mut model.params, &grads, Some(&touched));
            for &j in &touched {
                grads.w.row_mut(j as usize).iter_mut().for_each(|g| *g = T::zero());
            }
            grads.b.fill_zero();
        }
    }
    model
}
