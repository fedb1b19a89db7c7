//! Label propagation with clamped training vertices.

use rayon::prelude::*;

use super::ica::{content_logreg, train_labels};
use super::logreg::{LogRegConfig, SparseRow};
use crate::error::Result;
use crate::graph::Graph;
use crate::numerics::{argmax, Scalar, Vector};
use crate::trainer::SplitSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct LpConfig {
    pub iterations: usize,
    pub logreg: LogRegConfig,
}

impl Default for LpConfig {
    fn default() -> Self {
        Self {
            iterations: 20,
            logreg: LogRegConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpOutcome<T> {
    /// Final distribution of every vertex.
    pub distributions: Vec<Vector<T>>,
    /// Argmax labels aligned with `split.test`.
    pub predictions: Vec<usize>,
}

/// Runs `iterations` synchronous rounds where every unclamped vertex with at
/// least one neighbor takes the mean of its neighbors' distributions.
pub fn propagate<T: Scalar>(g: &Graph, initial: Vec<Vector<T>>, clamped: &[bool], iterations: usize) -> Vec<Vector<T>> {
    let mut current = initial;
    for _ in 0..iterations {
        current = step(g, &current, clamped);
    }
    current
}

/// One synchronous round of [`propagate`].
pub fn step<T: Scalar>(g: &Graph, current: &[Vector<T>], clamped: &[bool]) -> Vec<Vector<T>> {
    g.vertices()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&v| {
            let nbrs = g.out_neighbors(v);
            if clamped[v.index()] || nbrs.is_empty() {
                return current[v.index()].clone();
            }
            let mut acc = Vector::zeros(current[v.index()].len());
            for &u in nbrs {
                acc.add_assign(&current[u.index()]);
            }
            let n = T::from_usize(nbrs.len()).unwrap();
            acc.iter_mut().for_each(|a| *a /= n);
            acc
        })
        .collect()
}

pub fn run_lp<T: Scalar>(g: &Graph, split: &SplitSpec, cfg: &LpConfig) -> Result<LpOutcome<T>> {
    let lr = content_logreg::<T>(g, split, &cfg.logreg)?;
    let l = g.class_count();
    let mut clamped = vec![false; g.vertex_count()];
    let mut initial: Vec<Vector<T>> = g
        .vertices()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&v| lr.predict_proba(&SparseRow::binary(g.features(v))))
        .collect();
    let labels = train_labels(g, split)?;
    for &v in &split.train {
        let y = labels[v.index()];
        let mut one_hot = Vector::zeros(l);
        one_hot[y] = T::one();
        initial[v.index()] = one_hot;
        clamped[v.index()] = true;
    }
    let distributions = propagate(g, initial, &clamped, cfg.iterations);
    let predictions = split.test.iter().map(|v| argmax(&distributions[v.index()])).collect();
    Ok(LpOutcome { distributions, predictions })
}
