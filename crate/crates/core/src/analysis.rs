//! Evaluation metrics, label transition matrices and experiment summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numerics::Matrix;
use crate::tree::build_tree;
use crate::units::Pooling;

/// Per-class counts behind micro-averaged scores.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_positive: Vec<u64>,
    pub false_positive: Vec<u64>,
    pub false_negative: Vec<u64>,
    pub total: u64,
}

impl ConfusionCounts {
    pub fn from_labels(preds: &[usize], truth: &[usize]) -> Result<Self> {
        if preds.len() != truth.len() {
            return Err(Error::Metric(format!(
                "{} predictions for {} ground-truth labels",
                preds.len(),
                truth.len()
            )));
        }
        let classes = preds.iter().chain(truth).map(|&l| l + 1).max().unwrap_or(0);
        let mut c = Self {
            true_positive: vec![0; classes],
            false_positive: vec![0; classes],
            false_negative: vec![0; classes],
            total: preds.len() as u64,
        };
        for (&p, &t) in preds.iter().zip(truth) {
            if p == t {
                c.true_positive[p] += 1;
            } else {
                c.false_positive[p] += 1;
                c.false_negative[t] += 1;
            }
        }
        Ok(c)
    }

    pub fn micro_f1(&self) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::Metric("Micro-F1 of an empty prediction set".into()));
        }
        let tp: u64 = self.true_positive.iter().sum();
        let fp: u64 = self.false_positive.iter().sum();
        let fnn: u64 = self.false_negative.iter().sum();
        Ok(2.0 * tp as f64 / (2 * tp + fp + fnn) as f64)
    }
}

/// Micro-averaged F1. With one label per vertex every error is one false
/// positive plus one false negative, so this is plain accuracy.
pub fn micro_f1(preds: &[usize], truth: &[usize]) -> Result<f64> {
    ConfusionCounts::from_labels(preds, truth)?.micro_f1()
}

/// Label co-occurrence between each vertex and the vertices `d` steps away
/// in its unrolled tree.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    pub d: usize,
    pub counts: Vec<Vec<u64>>,
    /// Row-normalized `counts`; rows without any count are uniform.
    pub probs: Matrix<f64>,
    pub empty_rows: Vec<bool>,
    pub label_names: Vec<String>,
}

impl TransitionMatrix {
    pub fn from_counts(d: usize, counts: Vec<Vec<u64>>, label_names: Vec<String>) -> Self {
        let l = counts.len();
        let mut probs = Matrix::zeros(l, l);
        let mut empty_rows = vec![false; l];
        for (i, row) in counts.iter().enumerate() {
            let total: u64 = row.iter().sum();
            for (j, &c) in row.iter().enumerate() {
                probs.row_mut(i)[j] = if total == 0 { 1.0 / l as f64 } else { c as f64 / total as f64 };
            }
            empty_rows[i] = total == 0;
        }
        Self {
            d,
            counts,
            probs,
            empty_rows,
            label_names,
        }
    }

    /// Tab-separated table with label names on both axes and a trailing
    /// `empty_row` flag.
    pub fn to_delimited(&self) -> String {
        let mut s = String::from("label");
        for n in &self.label_names {
            s.push('\t');
            s.push_str(n);
        }
        s.push_str("\tempty_row\n");
        for (i, n) in self.label_names.iter().enumerate() {
            s.push_str(n);
            for p in self.probs.row(i) {
                write!(s, "\t{p}").unwrap();
            }
            writeln!(s, "\t{}", self.empty_rows[i]).unwrap();
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_delimited()).map_err(|e| Error::io(path, e))
    }
}

pub fn transition_matrix(g: &Graph, d: usize) -> Result<TransitionMatrix> {
    if d == 0 {
        return Err(Error::Config("transition matrix needs d >= 1".into()));
    }
    let l = g.class_count();
    let mut counts = vec![vec![0u64; l]; l];
    for v in g.vertices() {
        let a = g
            .label(v)
            .ok_or_else(|| Error::Config(format!("vertex {} has no label", g.external_id(v))))?;
        let tree = build_tree(g, v, d)?;
        for node in tree.layer(d) {
            let b = g.label(node.vertex).expect("all vertices labeled");
            counts[a][b] += 1;
        }
    }
    Ok(TransitionMatrix::from_counts(d, counts, g.label_names().to_vec()))
}

/// One evaluation of one model on one split, written as a JSON line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub dataset: String,
    pub model: String,
    pub depth: Option<usize>,
    pub pooling: Option<Pooling>,
    pub hidden: Option<usize>,
    pub fraction: f64,
    pub split: usize,
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub test_micro_f1: f64,
}

pub fn write_metrics(records: &[MetricRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parses JSON lines, skipping blank and malformed lines with a warning.
pub fn parse_metrics(text: &str, origin: &str) -> Vec<MetricRecord> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .filter_map(|(i, l)| match serde_json::from_str(l) {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("{origin}:{}: skipping malformed record: {e}", i + 1);
                None
            }
        })
        .collect()
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_metrics(&text, &path.display().to_string()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub model: String,
    pub depth: Option<usize>,
    pub pooling: Option<Pooling>,
    pub fraction: f64,
    pub splits: usize,
    /// Mean over splits of each split's best Micro-F1.
    pub mean: f64,
    /// Sample standard deviation of the same values; 0 for a single split.
    pub std: f64,
}

type GroupKey = (String, String, Option<usize>, Option<Pooling>, u64);

/// Groups records by dataset, model, depth, pooling and train fraction,
/// keeps the best Micro-F1 of each split and reports mean and deviation.
pub fn summarize_experiments(records: &[MetricRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<GroupKey, BTreeMap<usize, f64>> = BTreeMap::new();
    for r in records {
        let key = (r.dataset.clone(), r.model.clone(), r.depth, r.pooling, r.fraction.to_bits());
        let best = groups.entry(key).or_default().entry(r.split).or_insert(f64::NEG_INFINITY);
        *best = best.max(r.test_micro_f1);
    }
    groups
        .into_iter()
        .map(|((dataset, model, depth, pooling, fraction), per_split)| {
            let mut values: Vec<f64> = per_split.into_values().collect();
            values.sort_by(f64::total_cmp);
            let n = values.len();
            let constant = values.first() == values.last();
            let mean = if constant { values[0] } else { values.iter().sum::<f64>() / n as f64 };
            let std = if constant {
                0.0
            } else {
                let mut sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
                sq.sort_by(f64::total_cmp);
                (sq.iter().sum::<f64>() / (n - 1) as f64).sqrt()
            };
            SummaryRow {
                dataset,
                model,
                depth,
                pooling,
                fraction: f64::from_bits(fraction),
                splits: n,
                mean,
                std,
            }
        })
        .collect()
}

pub fn summary_to_delimited(rows: &[SummaryRow]) -> String {
    let mut s = String::from("dataset\tmodel\tdepth\tpooling\tfraction\tsplits\tmean\tstd\n");
    for r in rows {
        let depth = r.depth.map_or_else(|| "-".to_string(), |d| d.to_string());
        let pooling = r.pooling.map_or("-", |p| p.as_str());
        writeln!(
            s,
            "{}\t{}\t{depth}\t{pooling}\t{}\t{}\t{}\t{}",
            r.dataset, r.model, r.fraction, r.splits, r.mean, r.std
        )
        .unwrap();
    }
    s
}
