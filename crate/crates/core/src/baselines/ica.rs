//! Iterative classification with label-derived link features.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logreg::{content_rows, train_logreg, LogRegConfig, LogRegModel, SparseRow};
use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};
use crate::numerics::Scalar;
use crate::trainer::SplitSpec;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IcaVariant {
    /// Indicator of each label among the neighbors.
    #[default]
    Binary,
    /// Number of neighbors carrying each label.
    Count,
}

impl IcaVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            IcaVariant::Binary => "binary",
            IcaVariant::Count => "count",
        }
    }
}

impl fmt::Display for IcaVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IcaVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(IcaVariant::Binary),
            "count" => Ok(IcaVariant::Count),
            other => Err(Error::Config(format!("unknown ICA variant `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcaConfig {
    pub variant: IcaVariant,
    pub iterations: usize,
    pub logreg: LogRegConfig,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self {
            variant: IcaVariant::Binary,
            iterations: 5,
            logreg: LogRegConfig::default(),
        }
    }
}

/// Labels of the test vertices after each stage, aligned with `split.test`.
#[derive(Clone, Debug, PartialEq)]
pub struct IcaOutcome {
    /// Content-only logistic regression.
    pub bootstrap: Vec<usize>,
    /// First entry uses link features from the bootstrap labels; each later
    /// entry recomputes them from the previous one.
    pub rounds: Vec<Vec<usize>>,
}

impl IcaOutcome {
    pub fn predictions(&self) -> &[usize] {
        self.rounds.last().unwrap_or(&self.bootstrap)
    }
}

/// Link features of `v` given the current label of every vertex.
pub fn link_features<T: Scalar>(
    g: &Graph,
    v: VertexId,
    current: &[Option<usize>],
    variant: IcaVariant,
) -> Vec<T> {
    let mut out = vec![T::zero(); g.class_count()];
    for &u in g.out_neighbors(v) {
        if let Some(l) = current[u.index()] {
            match variant {
                IcaVariant::Binary => out[l] = T::one(),
                IcaVariant::Count => out[l] += T::one(),
            }
        }
    }
    out
}

fn augmented_rows<T: Scalar>(
    g: &Graph,
    base: &[SparseRow<T>],
    current: &[Option<usize>],
    variant: IcaVariant,
    which: &[VertexId],
) -> Vec<SparseRow<T>> {
    which
        .par_iter()
        .map(|&v| {
            let mut row = base[v.index()].clone();
            row.extend_dense(g.feature_dim(), &link_features::<T>(g, v, current, variant));
            row
        })
        .collect()
}

fn predict_all<T: Scalar>(model: &LogRegModel<T>, rows: &[SparseRow<T>]) -> Vec<usize> {
    rows.par_iter().map(|r| model.predict(r)).collect()
}

/// Train vertices carry their true labels, test vertices the given ones,
/// every other vertex none.
fn assignment(g: &Graph, split: &SplitSpec, test_labels: &[usize]) -> Vec<Option<usize>> {
    let mut current = vec![None; g.vertex_count()];
    for &v in &split.train {
        current[v.index()] = g.label(v);
    }
    for (&v, &l) in split.test.iter().zip(test_labels) {
        current[v.index()] = Some(l);
    }
    current
}

pub(crate) fn train_labels(g: &Graph, split: &SplitSpec) -> Result<Vec<usize>> {
    let mut labels = vec![0; g.vertex_count()];
    for &v in &split.train {
        labels[v.index()] = g
            .label(v)
            .ok_or_else(|| Error::Config(format!("training vertex {v} has no label")))?;
    }
    Ok(labels)
}

/// Content-only logistic regression on the split's training vertices.
pub fn content_logreg<T: Scalar>(g: &Graph, split: &SplitSpec, cfg: &LogRegConfig) -> Result<LogRegModel<T>> {
    let labels = train_labels(g, split)?;
    let rows = content_rows::<T>(g);
    let train: Vec<usize> = split.train.iter().map(|v| v.index()).collect();
    Ok(train_logreg(&rows, &labels, &train, g.feature_dim(), g.class_count(), cfg))
}

pub fn run_ica<T: Scalar>(g: &Graph, split: &SplitSpec, cfg: &IcaConfig) -> Result<IcaOutcome> {
    let labels = train_labels(g, split)?;
    let base = content_rows::<T>(g);
    let train: Vec<usize> = split.train.iter().map(|v| v.index()).collect();
    let content = train_logreg(&base, &labels, &train, g.feature_dim(), g.class_count(), &cfg.logreg);
    let test_rows: Vec<SparseRow<T>> = split.test.iter().map(|v| base[v.index()].clone()).collect();
    let bootstrap = predict_all(&content, &test_rows);

    let mut current = assignment(g, split, &bootstrap);
    let train_rows = augmented_rows(g, &base, &current, cfg.variant, &split.train);
    let mut rows = vec![SparseRow::default(); g.vertex_count()];
    for (&v, r) in split.train.iter().zip(train_rows) {
        rows[v.index()] = r;
    }
    let dim = g.feature_dim() + g.class_count();
    let model = train_logreg(&rows, &labels, &train, dim, g.class_count(), &cfg.logreg);

    let mut rounds = Vec::with_capacity(cfg.iterations + 1);
    for _ in 0..=cfg.iterations {
        let test_rows = augmented_rows(g, &base, &current, cfg.variant, &split.test);
        let preds = predict_all(&model, &test_rows);
        current = assignment(g, split, &preds);
        rounds.push(preds);
    }
    Ok(IcaOutcome { bootstrap, rounds })
}
