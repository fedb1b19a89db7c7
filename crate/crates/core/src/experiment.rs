//! Named datasets and multi-split experiment runs that emit metric records.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::analysis::{micro_f1, MetricRecord};
use crate::baselines::{content_logreg, run_ica, run_lp, IcaConfig, IcaVariant, LogRegConfig, LpConfig, SparseRow};
use crate::error::{Error, Result};
use crate::graph::{build_similarity_graph, load_linqs_many, EdgeMode, Graph, LinqsFiles};
use crate::numerics::Scalar;
use crate::trainer::{train_grnn, SplitSpec, TrainConfig, TrainOutcome};

pub const DATA_ROOT_ENV: &str = "GRNN_DATA_ROOT";
pub const WEBKB_UNIVERSITIES: [&str; 4] = ["cornell", "texas", "washington", "wisconsin"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dataset {
    Cora,
    Citeseer,
    /// The four university subsets merged into one graph.
    Webkb,
    /// WebKB content with links replaced by each page's `k` most similar pages.
    WebkbSim,
}

impl Dataset {
    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::Cora => "cora",
            Dataset::Citeseer => "citeseer",
            Dataset::Webkb => "webkb",
            Dataset::WebkbSim => "webkb-sim",
        }
    }

    /// Conventional file locations under `root`.
    pub fn files(self, root: &Path) -> Vec<LinqsFiles> {
        match self {
            Dataset::Cora | Dataset::Citeseer => {
                let name = self.as_str();
                let dir = root.join(name);
                vec![LinqsFiles::new(dir.join(format!("{name}.content")), dir.join(format!("{name}.cites")))]
            }
            Dataset::Webkb | Dataset::WebkbSim => WEBKB_UNIVERSITIES
                .iter()
                .map(|u| {
                    let dir = root.join("webkb");
                    LinqsFiles::new(dir.join(format!("{u}.content")), dir.join(format!("{u}.cites")))
                })
                .collect(),
        }
    }

    /// Loads the dataset from `files`; `k` only matters for `webkb-sim`.
    pub fn load(self, files: &[LinqsFiles], mode: EdgeMode, k: usize) -> Result<Graph> {
        let g = load_linqs_many(files, mode)?;
        match self {
            Dataset::WebkbSim => {
                let sim = build_similarity_graph(&g, k)?;
                Ok(if mode == EdgeMode::Undirected { sim.symmetrized() } else { sim })
            }
            _ => Ok(g),
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cora" => Ok(Dataset::Cora),
            "citeseer" => Ok(Dataset::Citeseer),
            "webkb" => Ok(Dataset::Webkb),
            "webkb-sim" | "webkb_sim" => Ok(Dataset::WebkbSim),
            other => Err(Error::Config(format!("unknown dataset `{other}`"))),
        }
    }
}

/// `$GRNN_DATA_ROOT` if set, otherwise `fallback`.
pub fn data_root(fallback: &Path) -> PathBuf {
    std::env::var_os(DATA_ROOT_ENV).map_or_else(|| fallback.to_path_buf(), PathBuf::from)
}

pub fn grnn_model_name(cfg: &TrainConfig) -> String {
    match cfg.unit {
        crate::model::UnitKind::Nrnu => "G-NRNU".into(),
        crate::model::UnitKind::Lstm => "G-LSTM".into(),
    }
}

/// Trains one model per split, seeding each split from `seed`. Returns one
/// record per trained epoch plus the outcomes.
pub fn run_grnn_splits<T: Scalar>(
    dataset: &str,
    g: &Graph,
    splits: &[SplitSpec],
    cfg: &TrainConfig,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<MetricRecord>, Vec<TrainOutcome<T>>)> {
    let mut records = Vec::new();
    let mut outcomes = Vec::new();
    for s in splits {
        let split_cfg = cfg.clone().with_seeds_for_split(seed, s.index);
        let out = train_grnn::<T>(g, s, &split_cfg)?;
        log::info!(
            "{dataset} split {}: best Micro-F1 {:.4} at epoch {}",
            s.index,
            out.best_micro_f1,
            out.best_epoch
        );
        records.extend(out.history.iter().map(|e| MetricRecord {
            dataset: dataset.to_string(),
            model: grnn_model_name(cfg),
            depth: Some(cfg.depth),
            pooling: Some(cfg.pooling),
            hidden: Some(cfg.hidden),
            fraction,
            split: s.index,
            epoch: e.epoch,
            train_loss: Some(e.train_loss),
            test_micro_f1: e.test_micro_f1,
        }));
        outcomes.push(out);
    }
    Ok((records, outcomes))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    Lr,
    IcaBinary,
    IcaCount,
    Lp,
}

impl Baseline {
    pub const ALL: [Baseline; 4] = [Baseline::Lr, Baseline::IcaBinary, Baseline::IcaCount, Baseline::Lp];

    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::Lr => "LR",
            Baseline::IcaBinary => "ICA-binary",
            Baseline::IcaCount => "ICA-count",
            Baseline::Lp => "LP",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr" => Ok(Baseline::Lr),
            "ica-binary" | "ica_binary" => Ok(Baseline::IcaBinary),
            "ica-count" | "ica_count" => Ok(Baseline::IcaCount),
            "lp" => Ok(Baseline::Lp),
            other => Err(Error::Config(format!("unknown baseline `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// ICA rounds or LP iterations; `None` picks 5 for ICA and 20 for LP.
    pub iterations: Option<usize>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 10,
            iterations: None,
        }
    }
}

/// Test-set labels predicted by `method` on one split.
pub fn baseline_predictions(g: &Graph, split: &SplitSpec, method: Baseline, cfg: &BaselineConfig, seed: u64) -> Result<Vec<usize>> {
    let logreg = LogRegConfig {
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        shuffle_seed: seed,
    };
    Ok(match method {
        Baseline::Lr => {
            let m = content_logreg::<f64>(g, split, &logreg)?;
            split.test.iter().map(|&v| m.predict(&SparseRow::binary(g.features(v)))).collect()
        }
        Baseline::IcaBinary | Baseline::IcaCount => {
            let variant = if method == Baseline::IcaBinary { IcaVariant::Binary } else { IcaVariant::Count };
            let ica = IcaConfig {
                variant,
                iterations: cfg.iterations.unwrap_or(5),
                logreg,
            };
            run_ica::<f64>(g, split, &ica)?.predictions().to_vec()
        }
        Baseline::Lp => {
            let lp = LpConfig {
                iterations: cfg.iterations.unwrap_or(20),
                logreg,
            };
            run_lp::<f64>(g, split, &lp)?.predictions
        }
    })
}

/// One record per split.
pub fn run_baseline_splits(
    dataset: &str,
    g: &Graph,
    splits: &[SplitSpec],
    method: Baseline,
    cfg: &BaselineConfig,
    fraction: f64,
    seed: u64,
) -> Result<Vec<MetricRecord>> {
    splits
        .iter()
        .map(|s| {
            let preds = baseline_predictions(g, s, method, cfg, crate::numerics::derive_seed(seed, s.index as u64))?;
            let truth: Vec<usize> = s.test.iter().map(|&v| g.label(v).expect("test vertices are labeled")).collect();
            Ok(MetricRecord {
                dataset: dataset.to_string(),
                model: method.as_str().to_string(),
                depth: None,
                pooling: None,
                hidden: None,
                fraction,
                split: s.index,
                epoch: 0,
                train_loss: None,
                test_micro_f1: micro_f1(&preds, &truth)?,
            })
        })
        .collect()
}
