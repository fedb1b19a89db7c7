//! Vertex-attributed graphs, LINQS flat-file ingestion and k-nearest
//! cosine-similarity graph construction.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense handle of a vertex, contiguous in `[0, |V|)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VertexId(pub u32);

impl VertexId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for VertexId {
    fn from(i: usize) -> Self {
        VertexId(u32::try_from(i).expect("vertex index fits in u32"))
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMode {
    Directed,
    #[default]
    Undirected,
}

impl std::str::FromStr for EdgeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "directed" => Ok(EdgeMode::Directed),
            "undirected" => Ok(EdgeMode::Undirected),
            other => Err(Error::Config(format!("unknown edge mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub vertices: usize,
    pub edges: usize,
    pub classes: usize,
    pub feature_dim: usize,
}

/// A directed graph whose vertices carry sparse binary feature vectors and
/// optional class labels. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    external_ids: Vec<String>,
    features: Vec<Vec<u32>>,
    labels: Vec<Option<usize>>,
    adjacency: Vec<Vec<VertexId>>,
    label_names: Vec<String>,
    feature_dim: usize,
    edge_records: usize,
    skipped_edges: usize,
}

impl Graph {
    /// Builds a graph from in-memory parts. `features[v]` lists the active
    /// feature indices of vertex `v`; they are sorted and deduplicated here.
    pub fn from_parts(
        feature_dim: usize,
        label_names: Vec<String>,
        features: Vec<Vec<u32>>,
        labels: Vec<Option<usize>>,
        edges: &[(usize, usize)],
        mode: EdgeMode,
    ) -> Result<Self> {
        let n = features.len();
        if labels.len() != n {
            return Err(Error::Graph(format!(
                "{} feature rows but {} labels",
                n,
                labels.len()
            )));
        }
        let mut features = features;
        for (v, f) in features.iter_mut().enumerate() {
            f.sort_unstable();
            f.dedup();
            if let Some(&bad) = f.iter().find(|&&i| i as usize >= feature_dim) {
                return Err(Error::Graph(format!(
                    "vertex {v} has feature index {bad} >= feature_dim {feature_dim}"
                )));
            }
        }
        for (v, l) in labels.iter().enumerate() {
            if let Some(l) = *l {
                if l >= label_names.len() {
                    return Err(Error::Graph(format!(
                        "vertex {v} has label {l} but only {} classes",
                        label_names.len()
                    )));
                }
            }
        }
        let mut g = Graph {
            external_ids: (0..n).map(|i| i.to_string()).collect(),
            features,
            labels,
            adjacency: vec![Vec::new(); n],
            label_names,
            feature_dim,
            edge_records: 0,
            skipped_edges: 0,
        };
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Graph(format!("edge ({a}, {b}) out of range for {n} vertices")));
            }
            g.insert_edge(a.into(), b.into(), mode);
            g.edge_records += 1;
        }
        Ok(g)
    }

    pub fn with_external_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.vertex_count() {
            return Err(Error::Graph("external id count must equal vertex count".into()));
        }
        self.external_ids = ids;
        Ok(self)
    }

    fn insert_edge(&mut self, a: VertexId, b: VertexId, mode: EdgeMode) {
        push_unique(&mut self.adjacency[a.index()], b);
        if mode == EdgeMode::Undirected && a != b {
            push_unique(&mut self.adjacency[b.index()], a);
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.features.len()
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.vertex_count()).map(VertexId::from)
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn class_count(&self) -> usize {
        self.label_names.len()
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Sorted active feature indices of `v`.
    pub fn features(&self, v: VertexId) -> &[u32] {
        &self.features[v.index()]
    }

    pub fn label(&self, v: VertexId) -> Option<usize> {
        self.labels[v.index()]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn labeled_vertices(&self) -> Vec<VertexId> {
        self.vertices().filter(|&v| self.label(v).is_some()).collect()
    }

    pub fn external_id(&self, v: VertexId) -> &str {
        &self.external_ids[v.index()]
    }

    pub fn find(&self, external_id: &str) -> Option<VertexId> {
        self.external_ids
            .iter()
            .position(|id| id == external_id)
            .map(VertexId::from)
    }

    /// Stored outgoing adjacency of `v`, in insertion order.
    pub fn out_neighbors(&self, v: VertexId) -> &[VertexId] {
        &self.adjacency[v.index()]
    }

    pub fn arc_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    /// Edge records that named unknown vertices and were dropped on load.
    pub fn skipped_edges(&self) -> usize {
        self.skipped_edges
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            vertices: self.vertex_count(),
            edges: self.edge_records,
            classes: self.class_count(),
            feature_dim: self.feature_dim,
        }
    }

    /// Copy of this graph with every arc mirrored.
    pub fn symmetrized(&self) -> Graph {
        let mut g = self.clone();
        for a in 0..self.vertex_count() {
            for &b in &self.adjacency[a] {
                push_unique(&mut g.adjacency[b.index()], VertexId::from(a));
            }
        }
        g
    }

    /// Same vertices, features and labels; new edge set.
    fn with_adjacency(&self, adjacency: Vec<Vec<VertexId>>) -> Graph {
        let edge_records = adjacency.iter().map(Vec::len).sum();
        Graph {
            external_ids: self.external_ids.clone(),
            features: self.features.clone(),
            labels: self.labels.clone(),
            adjacency,
            label_names: self.label_names.clone(),
            feature_dim: self.feature_dim,
            edge_records,
            skipped_edges: 0,
        }
    }
}

fn push_unique(list: &mut Vec<VertexId>, v: VertexId) {
    if !list.contains(&v) {
        list.push(v);
    }
}

/// One `<content, cites>` file pair in LINQS layout.
#[derive(Clone, Debug)]
pub struct LinqsFiles {
    pub content: PathBuf,
    pub cites: PathBuf,
}

impl LinqsFiles {
    pub fn new(content: impl Into<PathBuf>, cites: impl Into<PathBuf>) -> Self {
        Self {
            content: content.into(),
            cites: cites.into(),
        }
    }
}

/// Loads a LINQS `content` + `cites` pair.
pub fn load_linqs(content: &Path, cites: &Path, mode: EdgeMode) -> Result<Graph> {
    load_linqs_many(&[LinqsFiles::new(content, cites)], mode)
}

/// Loads several LINQS file pairs into one graph (WebKB ships one pair per
/// university). All pairs must share a feature width; vertex ids must be
/// unique across the pairs.
pub fn load_linqs_many(files: &[LinqsFiles], mode: EdgeMode) -> Result<Graph> {
    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut features: Vec<Vec<u32>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut feature_dim: Option<usize> = None;

    for pair in files {
        let text = fs::read_to_string(&pair.content).map_err(|e| Error::io(&pair.content, e))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: pair.content.clone(),
                line: lineno + 1,
                message,
            };
            let tokens: Vec<&str> = line.split('\t').collect();
            if tokens.len() < 3 {
                return Err(parse_err(format!(
                    "expected `id TAB features.. TAB label`, found {} fields",
                    tokens.len()
                )));
            }
            let width = tokens.len() - 2;
            match feature_dim {
                None => feature_dim = Some(width),
                Some(f) if f != width => {
                    return Err(parse_err(format!("feature width {width} differs from {f}")));
                }
                Some(_) => {}
            }
            let id = tokens[0].to_string();
            if index.contains_key(&id) {
                return Err(parse_err(format!("duplicate vertex id `{id}`")));
            }
            let mut active = Vec::new();
            for (j, tok) in tokens[1..=width].iter().enumerate() {
                match tok.trim() {
                    "0" => {}
                    "1" => active.push(j as u32),
                    other => {
                        return Err(parse_err(format!(
                            "feature {j} is `{other}`, expected 0 or 1"
                        )))
                    }
                }
            }
            index.insert(id.clone(), ids.len());
            ids.push(id);
            features.push(active);
            raw_labels.push(tokens[width + 1].trim().to_string());
        }
    }

    let feature_dim = feature_dim
        .ok_or_else(|| Error::Graph("content files contain no vertices".into()))?;
    let mut label_names: Vec<String> = raw_labels.clone();
    label_names.sort();
    label_names.dedup();
    let labels = raw_labels
        .iter()
        .map(|l| Some(label_names.binary_search(l).expect("label collected above")))
        .collect();

    let mut g = Graph::from_parts(feature_dim, label_names, features, labels, &[], mode)?
        .with_external_ids(ids)?;

    for pair in files {
        let text = fs::read_to_string(&pair.cites).map_err(|e| Error::io(&pair.cites, e))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split('\t').map(str::trim).collect();
            if tokens.len() != 2 {
                return Err(Error::Parse {
                    path: pair.cites.clone(),
                    line: lineno + 1,
                    message: format!("expected `id TAB id`, found {} fields", tokens.len()),
                });
            }
            match (index.get(tokens[0]), index.get(tokens[1])) {
                (Some(&a), Some(&b)) => {
                    g.insert_edge(a.into(), b.into(), mode);
                    g.edge_records += 1;
                }
                _ => g.skipped_edges += 1,
            }
        }
    }
    if g.skipped_edges > 0 {
        log::warn!(
            "skipped {} edge records naming unknown vertex ids",
            g.skipped_edges
        );
    }
    Ok(g)
}

/// `|A ∩ B| / sqrt(|A| |B|)` over sorted index sets; zero when either is empty.
pub fn cosine_similarity(a: &[u32], b: &[u32]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    intersection_size(a, b) as f64 / ((a.len() * b.len()) as f64).sqrt()
}

fn intersection_size(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Exact cosine as the fraction `inter² / (|A| |B|)`, so candidates compare
/// without rounding.
#[derive(Clone, Copy, Debug)]
struct SquaredCosine {
    num: u128,
    den: u128,
}

impl SquaredCosine {
    fn new(a: &[u32], b: &[u32]) -> Self {
        if a.is_empty() || b.is_empty() {
            return Self { num: 0, den: 1 };
        }
        let inter = intersection_size(a, b) as u128;
        Self {
            num: inter * inter,
            den: (a.len() as u128) * (b.len() as u128),
        }
    }

    fn cmp(&self, other: &Self) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

/// Links every vertex to its `k` most cosine-similar other vertices (ties
/// to the lower index). The result is stored directed; use
/// [`Graph::symmetrized`] for an undirected view.
pub fn build_similarity_graph(g: &Graph, k: usize) -> Result<Graph> {
    let n = g.vertex_count();
    if k == 0 {
        return Err(Error::Config("similarity graph needs k >= 1".into()));
    }
    if n < k + 1 {
        return Err(Error::Graph(format!(
            "similarity graph with k={k} needs at least {} vertices, found {n}",
            k + 1
        )));
    }
    let empty = g.vertices().filter(|&v| g.features(v).is_empty()).count();
    if empty > 0 {
        log::warn!("{empty} vertices have no active features; their similarities are 0");
    }

    let adjacency = (0..n)
        .map(|i| {
            let fi = &g.features[i];
            let mut cands: Vec<(SquaredCosine, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (SquaredCosine::new(fi, &g.features[j]), j))
                .collect();
            cands.sort_by(|(sa, ja), (sb, jb)| sb.cmp(sa).then(ja.cmp(jb)));
            cands.truncate(k);
            cands.into_iter().map(|(_, j)| VertexId::from(j)).collect()
        })
        .collect();
    Ok(g.with_adjacency(adjacency))
}

/// Writes every stored arc as `<id_a> TAB <id_b>`.
pub fn write_cites(g: &Graph, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for v in g.vertices() {
        for &u in g.out_neighbors(v) {
            writeln!(w, "{}\t{}", g.external_id(v), g.external_id(u)).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
