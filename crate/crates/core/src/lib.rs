//! Collective vertex classification with graph-based recursive neural
//! networks.
//!
//! Each target vertex is classified from a breadth-first tree unrolled
//! around it ([`tree`]). A recursive unit ([`units`]) runs bottom-up over the
//! tree and a softmax head reads the root state ([`model`]). Training uses
//! per-example Adagrad ([`trainer`]). Logistic regression, iterative
//! classification and label propagation are in [`baselines`].
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

pub mod analysis;
pub mod baselines;
pub mod checkpoint;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod model;
pub mod numerics;
pub mod params;
pub mod trainer;
pub mod tree;
pub mod units;

pub use analysis::{micro_f1, transition_matrix, MetricRecord, TransitionMatrix};
pub use error::{Error, Result};
pub use graph::{build_similarity_graph, load_linqs, load_linqs_many, EdgeMode, Graph, LinqsFiles, VertexId};
pub use model::{GrnnModel, ModelConfig, UnitKind};
pub use numerics::{Rng, Scalar};
pub use trainer::{make_splits, train_grnn, SplitSpec, TrainConfig, TrainOutcome};
pub use tree::{build_tree, UnrollTree};
pub use units::Pooling;

pub type Vector = numerics::Vector<f64>;
pub type Matrix = numerics::Matrix<f64>;
pub type Model = GrnnModel<f64>;
pub type Params = model::Params<f64>;
pub type Gradients = model::Gradients<f64>;
