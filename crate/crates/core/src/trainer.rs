//! Adagrad, train/test splitting, and the per-example training loop.

use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::analysis::micro_f1;
use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};
use crate::model::{GrnnModel, Gradients, ModelConfig, UnitKind};
use crate::numerics::{derive_seed, Rng, Scalar};
use crate::params::ParamSet;
use crate::tree::{build_tree, UnrollTree};
use crate::units::Pooling;

pub const DEFAULT_EPSILON: f64 = 1e-8;

/// One elementwise Adagrad update: `acc += g²; p -= lr · g / (sqrt(acc) + ε)`.
pub fn adagrad_update<T: Scalar>(params: &mut [T], grads: &[T], acc: &mut [T], lr: T, eps: T) {
    assert_eq!(params.len(), grads.len(), "adagrad: params/grads length mismatch");
    assert_eq!(params.len(), acc.len(), "adagrad: params/accumulator length mismatch");
    for ((p, &g), a) in params.iter_mut().zip(grads).zip(acc.iter_mut()) {
        *a += g * g;
        *p -= lr * g / (a.sqrt() + eps);
    }
}

/// Adagrad accumulators laid out like the parameter set `P`.
#[derive(Clone, Debug)]
pub struct AdagradState<T, P> {
    pub accumulators: P,
    pub learning_rate: T,
    pub epsilon: T,
}

impl<T: Scalar, P: ParamSet<T>> AdagradState<T, P> {
    /// `zeros` must have the same tensor layout as the parameters.
    pub fn new(zeros: P, learning_rate: T) -> Self {
        Self {
            accumulators: zeros,
            learning_rate,
            epsilon: T::lit(DEFAULT_EPSILON),
        }
    }

    /// Applies one update. When `touched` is given, feature-indexed tensors
    /// are only updated on those rows; every other row has zero gradient.
    pub fn step(&mut self, params: &mut P, grads: &P, touched: Option<&[u32]>) {
        let mut ps = params.tensors_mut();
        let gs = grads.tensors();
        let mut acc = self.accumulators.tensors_mut();
        assert_eq!(ps.len(), gs.len(), "adagrad: tensor count mismatch");
        assert_eq!(ps.len(), acc.len(), "adagrad: accumulator tensor count mismatch");
        for ((p, g), a) in ps.iter_mut().zip(&gs).zip(acc.iter_mut()) {
            assert_eq!(p.name, g.name, "adagrad: tensor order mismatch");
            match touched {
                Some(rows) if p.feature_rows => {
                    let c = p.cols;
                    for &r in rows {
                        let span = r as usize * c..(r as usize + 1) * c;
                        adagrad_update(
                            &mut p.data[span.clone()],
                            &g.data[span.clone()],
                            &mut a.data[span],
                            self.learning_rate,
                            self.epsilon,
                        );
                    }
                }
                _ => adagrad_update(p.data, g.data, a.data, self.learning_rate, self.epsilon),
            }
        }
    }
}

/// One train/test partition of the labeled vertices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub index: usize,
    pub seed: u64,
    pub train: Vec<VertexId>,
    pub test: Vec<VertexId>,
}

/// `n_splits` independent uniform partitions with `round(fraction · N)`
/// training vertices each. Both sides come back sorted.
pub fn make_splits(g: &Graph, fraction: f64, n_splits: usize, seed: u64) -> Result<Vec<SplitSpec>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {fraction} not in (0, 1)")));
    }
    let labeled = g.labeled_vertices();
    let n_train = (fraction * labeled.len() as f64).round() as usize;
    if n_train == 0 || n_train == labeled.len() {
        return Err(Error::Config(format!(
            "fraction {fraction} of {} labeled vertices leaves an empty side",
            labeled.len()
        )));
    }
    let mut rng = Rng::seed_from(seed);
    Ok((0..n_splits)
        .map(|index| {
            let mut ids = labeled.clone();
            rng.shuffle(&mut ids);
            let mut test = ids.split_off(n_train);
            ids.sort_unstable();
            test.sort_unstable();
            SplitSpec { index, seed, train: ids, test }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub depth: usize,
    pub pooling: Pooling,
    pub unit: UnitKind,
    pub init_seed: u64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 0.01,
            hidden: 200,
            depth: 2,
            pooling: Pooling::Max,
            unit: UnitKind::Lstm,
            init_seed: 0,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("hidden size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }

    /// Seeds for split `index` derived from one base seed.
    pub fn with_seeds_for_split(mut self, base: u64, index: usize) -> Self {
        self.init_seed = derive_seed(base, 2 * index as u64 + 1);
        self.shuffle_seed = derive_seed(base, 2 * index as u64 + 2);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_micro_f1: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Test Micro-F1 of the freshly initialized model.
    pub initial_micro_f1: f64,
    pub history: Vec<EpochRecord>,
    /// Highest per-epoch test Micro-F1 (the initial score when no epochs ran).
    pub best_micro_f1: f64,
    /// Epoch that reached `best_micro_f1`; 0 when no epochs ran.
    pub best_epoch: usize,
    pub final_model: GrnnModel<T>,
    pub best_model: GrnnModel<T>,
}

impl<T> TrainOutcome<T> {
    pub fn final_micro_f1(&self) -> f64 {
        self.history.last().map_or(self.initial_micro_f1, |r| r.test_micro_f1)
    }
}

/// Unrolled trees for a set of target vertices, indexed by vertex.
pub struct TreeCache {
    trees: Vec<Option<UnrollTree>>,
}

impl TreeCache {
    pub fn build(g: &Graph, targets: &[VertexId], depth: usize) -> Result<Self> {
        let built: Vec<(VertexId, UnrollTree)> = targets
            .par_iter()
            .map(|&v| build_tree(g, v, depth).map(|t| (v, t)))
            .collect::<Result<_>>()?;
        let mut trees = vec![None; g.vertex_count()];
        for (v, t) in built {
            trees[v.index()] = Some(t);
        }
        Ok(Self { trees })
    }

    pub fn get(&self, v: VertexId) -> &UnrollTree {
        self.trees[v.index()].as_ref().expect("tree cached for vertex")
    }
}

/// Micro-F1 of `model` on `targets`.
pub fn evaluate<T: Scalar>(model: &GrnnModel<T>, g: &Graph, trees: &TreeCache, targets: &[VertexId]) -> Result<f64> {
    let preds: Vec<usize> = targets
        .par_iter()
        .map(|&v| model.classify(g, trees.get(v)).label)
        .collect();
    let truth: Vec<usize> = targets
        .iter()
        .map(|&v| g.label(v).expect("evaluation targets are labeled"))
        .collect();
    micro_f1(&preds, &truth)
}

/// Trains a fresh model on `split.train`, scoring `split.test` after
/// every epoch.
pub fn train_grnn<T: Scalar>(g: &Graph, split: &SplitSpec, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let model_cfg = ModelConfig {
        unit: cfg.unit,
        pooling: cfg.pooling,
        hidden: cfg.hidden,
        depth: cfg.depth,
        class_count: g.class_count(),
        feature_dim: g.feature_dim(),
    };
    let mut targets: Vec<VertexId> = split.train.iter().chain(&split.test).copied().collect();
    targets.sort_unstable();
    targets.dedup();
    let trees = TreeCache::build(g, &targets, cfg.depth)?;

    let mut model = GrnnModel::<T>::new(model_cfg, &mut Rng::seed_from(cfg.init_seed));
    let mut grads = Gradients::zeros(&model_cfg);
    let mut optim = AdagradState::new(grads.params.clone(), T::lit(cfg.learning_rate));
    let mut shuffler = Rng::seed_from(cfg.shuffle_seed);

    let initial = evaluate(&model, g, &trees, &split.test)?;
    let mut best = (initial, 0usize, model.clone());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order = split.train.clone();

    for epoch in 1..=cfg.epochs {
        shuffler.shuffle(&mut order);
        let mut total = 0.0f64;
        for &v in &order {
            let y = g
                .label(v)
                .ok_or_else(|| Error::Config(format!("training vertex {v} has no label")))?;
            let loss = model.accumulate_gradients(g, trees.get(v), y, &mut grads);
            total += loss.to_f64().unwrap_or(f64::NAN);
            grads.touched_rows();
            optim.step(&mut model.params, &grads.params, Some(&grads.touched));
            grads.clear();
        }
        let train_loss = total / order.len().max(1) as f64;
        let f1 = evaluate(&model, g, &trees, &split.test)?;
        log::debug!("split {} epoch {epoch}: loss {train_loss:.4} micro-F1 {f1:.4}", split.index);
        history.push(EpochRecord { epoch, train_loss, test_micro_f1: f1 });
        if epoch == 1 || f1 > best.0 {
            best = (f1, epoch, model.clone());
        }
    }

    Ok(TrainOutcome {
        initial_micro_f1: initial,
        history,
        best_micro_f1: best.0,
        best_epoch: best.1,
        best_model: best.2,
        final_model: model,
    })
}
