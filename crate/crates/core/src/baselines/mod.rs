//! Comparison methods: content-only logistic regression, iterative
//! classification, and label propagation.

mod ica;
mod logreg;
mod lp;

pub use ica::{content_logreg, link_features, run_ica, IcaConfig, IcaOutcome, IcaVariant};
pub use logreg::{content_rows, train_logreg, LogRegConfig, LogRegModel, LogRegParams, SparseRow};
pub use lp::{propagate, run_lp, step, LpConfig, LpOutcome};
