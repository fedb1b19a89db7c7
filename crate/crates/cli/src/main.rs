use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use grnn::analysis::{read_metrics, summarize_experiments, summary_to_delimited, write_metrics, MetricRecord};
use grnn::checkpoint::{load_checkpoint_for, save_checkpoint};
use grnn::experiment::{run_baseline_splits, run_grnn_splits, Baseline, BaselineConfig, Dataset, DATA_ROOT_ENV};
use grnn::graph::{build_similarity_graph, write_cites, EdgeMode, Graph, LinqsFiles};
use grnn::trainer::{evaluate, make_splits, SplitSpec, TrainConfig, TreeCache};
use grnn::{transition_matrix, Model, Pooling, UnitKind};

/// Collective vertex classification with graph-based recursive neural networks.
#[derive(Parser, Debug)]
#[command(name = "grnn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a GRNN on every split and write per-epoch metrics.
    Train(TrainArgs),
    /// Score a saved checkpoint on the test side of one split.
    Evaluate(EvaluateArgs),
    /// Run LR, ICA or LP on every split.
    Baseline(BaselineArgs),
    /// Write a cites file linking each vertex to its k most similar vertices.
    BuildSimGraph(SimArgs),
    /// Write the label transition matrix at a given step distance.
    TransitionMatrix(TransitionArgs),
    /// Aggregate metrics files into a mean/std table.
    Summarize(SummarizeArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// cora, citeseer, webkb or webkb-sim.
    #[arg(long)]
    dataset: Option<Dataset>,
    /// Content file(s); overrides the dataset's conventional location.
    #[arg(long)]
    content: Vec<PathBuf>,
    /// Cites file(s), one per --content.
    #[arg(long)]
    cites: Vec<PathBuf>,
    /// Directory holding cora/, citeseer/ and webkb/.
    #[arg(long, env = DATA_ROOT_ENV, default_value = "data")]
    data_root: PathBuf,
    #[arg(long, default_value = "undirected")]
    edge_mode: EdgeMode,
    /// Neighbors per vertex for webkb-sim.
    #[arg(long, default_value_t = 3, value_parser = positive_usize)]
    k: usize,
}

#[derive(Args, Debug)]
struct SplitArgs {
    /// Share of labeled vertices used for training.
    #[arg(long, default_value_t = 0.85, value_parser = fraction, allow_negative_numbers = true)]
    fraction: f64,
    #[arg(long, default_value_t = 5, value_parser = positive_usize)]
    splits: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// nrnu or lstm.
    #[arg(long, default_value = "lstm")]
    unit: UnitKind,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// sum, mean or max.
    #[arg(long, default_value = "max")]
    pooling: Pooling,
    #[arg(long, default_value_t = 200, value_parser = positive_usize)]
    hidden: usize,
    #[arg(long, default_value_t = 0.01, value_parser = positive_f64, allow_negative_numbers = true)]
    lr: f64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value = "metrics.jsonl")]
    metrics_out: PathBuf,
    /// Save each split's best-epoch model here as split<i>.ckpt.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Which split's test side to score.
    #[arg(long, default_value_t = 0)]
    split_index: usize,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// lr, ica-binary, ica-count or lp.
    #[arg(long)]
    method: Baseline,
    #[arg(long, default_value_t = 0.1, value_parser = positive_f64, allow_negative_numbers = true)]
    lr: f64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// ICA rounds (default 5) or LP iterations (default 20).
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, default_value = "metrics.jsonl")]
    metrics_out: PathBuf,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TransitionArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Step distance.
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    d: usize,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SummarizeArgs {
    /// Metrics files to aggregate.
    #[arg(long = "metrics", required = true)]
    metrics: Vec<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() && x > 0.0 => Ok(x),
        Ok(_) => Err("must be a positive finite number".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn fraction(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x < 1.0 => Ok(x),
        Ok(_) => Err("must lie strictly between 0 and 1".into()),
        Err(e) => Err(e.to_string()),
    }
}

impl DataArgs {
    fn name(&self) -> String {
        self.dataset.map_or_else(|| "custom".to_string(), |d| d.to_string())
    }

    fn files(&self) -> Result<Vec<LinqsFiles>> {
        if !self.content.is_empty() || !self.cites.is_empty() {
            if self.content.len() != self.cites.len() {
                bail!(
                    "--content and --cites must be given the same number of times ({} vs {})",
                    self.content.len(),
                    self.cites.len()
                );
            }
            for (flag, paths) in [("--content", &self.content), ("--cites", &self.cites)] {
                if let Some(p) = paths.iter().find(|p| !p.exists()) {
                    bail!("{flag}: {} does not exist", p.display());
                }
            }
            return Ok(self.content.iter().zip(&self.cites).map(|(c, e)| LinqsFiles::new(c, e)).collect());
        }
        let Some(dataset) = self.dataset else {
            bail!("--dataset is required unless --content and --cites are given");
        };
        let files = dataset.files(&self.data_root);
        for f in &files {
            if let Some(p) = [&f.content, &f.cites].into_iter().find(|p| !p.exists()) {
                bail!(
                    "--dataset {dataset}: {} not found (set --data-root or {DATA_ROOT_ENV})",
                    p.display()
                );
            }
        }
        Ok(files)
    }

    fn load(&self) -> Result<Graph> {
        let files = self.files()?;
        let dataset = self.dataset.unwrap_or(Dataset::Cora);
        let g = dataset.load(&files, self.edge_mode, self.k)?;
        let s = g.stats();
        log::info!(
            "{}: {} vertices, {} edges, {} classes, {} features",
            self.name(),
            s.vertices,
            s.edges,
            s.classes,
            s.feature_dim
        );
        Ok(g)
    }
}

impl SplitArgs {
    fn make(&self, g: &Graph) -> Result<Vec<SplitSpec>> {
        make_splits(g, self.fraction, self.splits, self.seed).context("--fraction")
    }
}

fn mean_std(records: &[MetricRecord]) -> (f64, f64, usize) {
    let rows = summarize_experiments(records);
    rows.first().map_or((0.0, 0.0, 0), |r| (r.mean, r.std, r.splits))
}

fn train(a: &TrainArgs) -> Result<String> {
    let g = a.data.load()?;
    let splits = a.split.make(&g)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        hidden: a.hidden,
        depth: a.depth,
        pooling: a.pooling,
        unit: a.unit,
        ..TrainConfig::default()
    };
    let name = a.data.name();
    let (records, outcomes) = run_grnn_splits::<f64>(&name, &g, &splits, &cfg, a.split.fraction, a.split.seed)?;
    write_metrics(&records, &a.metrics_out).context("--metrics-out")?;
    if let Some(dir) = &a.checkpoint_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("--checkpoint-dir {}", dir.display()))?;
        for (s, o) in splits.iter().zip(&outcomes) {
            save_checkpoint(&o.best_model, &dir.join(format!("split{}.ckpt", s.index)))?;
        }
    }
    let model_name = grnn::experiment::grnn_model_name(&cfg);
    let best: Vec<MetricRecord> = splits
        .iter()
        .zip(&outcomes)
        .map(|(s, o)| MetricRecord {
            dataset: name.clone(),
            model: model_name.clone(),
            depth: Some(a.depth),
            pooling: Some(a.pooling),
            hidden: Some(a.hidden),
            fraction: a.split.fraction,
            split: s.index,
            epoch: o.best_epoch,
            train_loss: None,
            test_micro_f1: o.best_micro_f1,
        })
        .collect();
    let (mean, std, n) = mean_std(&best);
    Ok(format!(
        "{name} {model_name} d={} {}: mean best Micro-F1 {:.2} ± {:.2} over {n} splits; {} records -> {}",
        a.depth,
        a.pooling,
        100.0 * mean,
        100.0 * std,
        records.len(),
        a.metrics_out.display()
    ))
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<String> {
    let g = a.data.load()?;
    let splits = a.split.make(&g)?;
    let Some(split) = splits.get(a.split_index) else {
        bail!("--split-index {} out of range for {} splits", a.split_index, splits.len());
    };
    let model: Model = load_checkpoint_for(&a.checkpoint, g.feature_dim(), g.class_count())
        .with_context(|| format!("--checkpoint {}", a.checkpoint.display()))?;
    let trees = TreeCache::build(&g, &split.test, model.config.depth)?;
    let f1 = evaluate(&model, &g, &trees, &split.test)?;
    Ok(format!(
        "{} split {}: Micro-F1 {:.2} on {} test vertices",
        a.data.name(),
        a.split_index,
        100.0 * f1,
        split.test.len()
    ))
}

fn baseline(a: &BaselineArgs) -> Result<String> {
    let g = a.data.load()?;
    let splits = a.split.make(&g)?;
    let cfg = BaselineConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        iterations: a.iterations,
    };
    let name = a.data.name();
    let records = run_baseline_splits(&name, &g, &splits, a.method, &cfg, a.split.fraction, a.split.seed)?;
    write_metrics(&records, &a.metrics_out).context("--metrics-out")?;
    let (mean, std, n) = mean_std(&records);
    Ok(format!(
        "{name} {}: mean Micro-F1 {:.2} ± {:.2} over {n} splits -> {}",
        a.method,
        100.0 * mean,
        100.0 * std,
        a.metrics_out.display()
    ))
}

fn build_sim(a: &SimArgs) -> Result<String> {
    let files = a.data.files()?;
    let g = grnn::load_linqs_many(&files, EdgeMode::Directed)?;
    let sim = build_similarity_graph(&g, a.data.k).context("--k")?;
    write_cites(&sim, &a.out).context("--out")?;
    Ok(format!(
        "{}: {} vertices, {} similarity links -> {}",
        a.data.name(),
        sim.vertex_count(),
        sim.arc_count(),
        a.out.display()
    ))
}

fn transition(a: &TransitionArgs) -> Result<String> {
    let g = a.data.load()?;
    let t = transition_matrix(&g, a.d).context("--d")?;
    let empty = t.empty_rows.iter().filter(|&&e| e).count();
    match &a.out {
        Some(p) => t.write(p).context("--out")?,
        None => print!("{}", t.to_delimited()),
    }
    let target = a.out.as_deref().map_or_else(|| "stdout".to_string(), |p| p.display().to_string());
    Ok(format!(
        "{} d={}: {n}x{n} transition matrix, {empty} empty rows -> {target}",
        a.data.name(),
        a.d,
        n = g.class_count()
    ))
}

fn summarize(a: &SummarizeArgs) -> Result<String> {
    let mut records = Vec::new();
    for p in &a.metrics {
        records.extend(read_metrics(p).with_context(|| format!("--metrics {}", p.display()))?);
    }
    if records.is_empty() {
        bail!("--metrics: no valid records found");
    }
    let rows = summarize_experiments(&records);
    let table = summary_to_delimited(&rows);
    match &a.out {
        Some(p) => std::fs::write(p, &table).with_context(|| format!("--out {}", p.display()))?,
        None => print!("{table}"),
    }
    Ok(format!("{} records in {} groups", records.len(), rows.len()))
}

fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Baseline(a) => baseline(a),
        Command::BuildSimGraph(a) => build_sim(a),
        Command::TransitionMatrix(a) => transition(a),
        Command::Summarize(a) => summarize(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            eprintln!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
