//! Graph and label containers, adjacency normalization, splits and the
//! on-disk dataset bundle.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::Matrix;

/// An undirected, node-labelled graph with dense features.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    num_classes: usize,
    adjacency: SparseMatrix,
    features: Matrix,
    labels: Vec<usize>,
}

impl Dataset {
    /// Validates and assembles a dataset. The adjacency must be square,
    /// exactly symmetric and free of self-loops.
    pub fn new(
        name: impl Into<String>,
        adjacency: SparseMatrix,
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = adjacency.n_rows();
        if !adjacency.is_square() {
            return Err(Error::DimensionMismatch("adjacency must be square".into()));
        }
        if features.nrows() != n || labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} nodes in adjacency, {} feature rows, {} labels",
                n,
                features.nrows(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::InvalidConfig("num_classes must be positive".into()));
        }
        if let Some(i) = labels.iter().position(|&c| c >= num_classes) {
            return Err(Error::InvalidConfig(format!(
                "node {i} has class {} but only {num_classes} classes are declared",
                labels[i]
            )));
        }
        if let Some(i) = (0..n).find(|&i| adjacency.get(i, i) != 0.0) {
            return Err(Error::InvalidConfig(format!("self-loop at node {i}")));
        }
        if !adjacency.is_symmetric() {
            return Err(Error::InvalidConfig(format!(
                "adjacency is not symmetric ({} mismatched entries)",
                adjacency.asymmetric_entries()
            )));
        }
        if adjacency.values().iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig("edge weights must be positive and finite".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix".into()));
        }
        Ok(Self {
            name: name.into(),
            num_classes,
            adjacency,
            features,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Undirected edges `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency.iter().filter(|&(u, v, _)| u < v).map(|(u, v, _)| (u, v))
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    /// Same nodes, features and labels on a different graph.
    pub fn with_adjacency(&self, adjacency: SparseMatrix) -> Result<Self> {
        Self::new(
            self.name.clone(),
            adjacency,
            self.features.clone(),
            self.labels.clone(),
            self.num_classes,
        )
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Node indices grouped by class.
    pub fn nodes_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &c) in self.labels.iter().enumerate() {
            by_class[c].push(i);
        }
        by_class
    }
}

/// The labelled subset `V_l` and its one-hot matrix `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    labeled_nodes: Vec<usize>,
    onehot: Matrix,
    label_of: Vec<Option<usize>>,
}

impl LabelSet {
    /// `pairs` lists `(node, class)`; nodes must be distinct.
    pub fn new(num_nodes: usize, num_classes: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut onehot = Array2::zeros((num_nodes, num_classes));
        let mut label_of = vec![None; num_nodes];
        let mut labeled_nodes = Vec::with_capacity(pairs.len());
        for &(node, class) in pairs {
            if node >= num_nodes || class >= num_classes {
                return Err(Error::InvalidConfig(format!(
                    "label ({node}, {class}) outside {num_nodes} nodes x {num_classes} classes"
                )));
            }
            if label_of[node].is_some() {
                return Err(Error::InvalidConfig(format!("node {node} labelled twice")));
            }
            label_of[node] = Some(class);
            onehot[[node, class]] = 1.0;
            labeled_nodes.push(node);
        }
        labeled_nodes.sort_unstable();
        Ok(Self {
            labeled_nodes,
            onehot,
            label_of,
        })
    }

    pub fn labeled_nodes(&self) -> &[usize] {
        &self.labeled_nodes
    }

    pub fn onehot(&self) -> &Matrix {
        &self.onehot
    }

    pub fn label_of(&self, node: usize) -> Option<usize> {
        self.label_of[node]
    }

    pub fn num_nodes(&self) -> usize {
        self.onehot.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.onehot.ncols()
    }

    pub fn len(&self) -> usize {
        self.labeled_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labeled_nodes.is_empty()
    }

    /// `(node, class)` pairs in node order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.labeled_nodes
            .iter()
            .map(|&i| (i, self.label_of[i].unwrap()))
            .collect()
    }

    /// Number of labelled nodes per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &i in &self.labeled_nodes {
            counts[self.label_of[i].unwrap()] += 1;
        }
        counts
    }
}

/// Disjoint train / early-stopping / test node sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub early_stop: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationStrategy {
    /// `D̃^{-1/2} (A + I) D̃^{-1/2}`
    #[default]
    SymSelfloop,
    /// `D^{-1/2} A D^{-1/2}`
    Sym,
    /// `D^{-1} A`
    Row,
}

impl NormalizationStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SymSelfloop => "sym_selfloop",
            Self::Sym => "sym",
            Self::Row => "row",
        }
    }
}

impl fmt::Display for NormalizationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormalizationStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sym_selfloop" | "sym-selfloop" => Ok(Self::SymSelfloop),
            "sym" => Ok(Self::Sym),
            "row" => Ok(Self::Row),
            other => Err(Error::InvalidConfig(format!("unknown normalization {other:?}"))),
        }
    }
}

/// Produces the propagation operator `Â` from a raw adjacency.
pub fn normalize_adjacency(adj: &SparseMatrix, strategy: NormalizationStrategy) -> Result<SparseMatrix> {
    if !adj.is_square() {
        return Err(Error::DimensionMismatch("adjacency must be square".into()));
    }
    let n = adj.n_rows();
    if adj.values().iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidConfig("adjacency has negative weights".into()));
    }
    if let Some(i) = (0..n).find(|&i| adj.get(i, i) != 0.0) {
        return Err(Error::InvalidConfig(format!(
            "adjacency has a self-loop at node {i}; self-loops are added by normalization"
        )));
    }

    let base = match strategy {
        NormalizationStrategy::SymSelfloop => {
            let eye = (0..n).map(|i| (i, i, 1.0));
            SparseMatrix::from_triplets(n, n, adj.iter().chain(eye))?
        }
        _ => adj.clone(),
    };
    let degrees = base.row_sums();
    if let Some(node) = degrees.iter().position(|&d| d == 0.0) {
        return Err(Error::IsolatedNode {
            node,
            strategy: strategy.as_str(),
        });
    }

    let mut values = base.values().to_vec();
    match strategy {
        NormalizationStrategy::SymSelfloop | NormalizationStrategy::Sym => {
            for r in 0..n {
                let (s, e) = (base.row_offsets()[r], base.row_offsets()[r + 1]);
                for k in s..e {
                    let c = base.col_indices()[k];
                    // the degree product commutes, so mirrored entries are bitwise equal
                    values[k] /= (degrees[r] * degrees[c]).sqrt();
                }
            }
        }
        NormalizationStrategy::Row => {
            for r in 0..n {
                let (s, e) = (base.row_offsets()[r], base.row_offsets()[r + 1]);
                for v in &mut values[s..e] {
                    *v /= degrees[r];
                }
            }
        }
    }
    SparseMatrix::from_csr(n, n, base.row_offsets().to_vec(), base.col_indices().to_vec(), values)
}

/// Samples `per_class` training nodes from every class, then
/// `early_stop_size` nodes from the remainder; everything else is test.
pub fn make_split(ds: &Dataset, per_class: usize, early_stop_size: usize, seed: u64) -> Result<Split> {
    let n = ds.num_nodes();
    if per_class * ds.num_classes() + early_stop_size >= n {
        return Err(Error::InvalidConfig(format!(
            "{per_class} per class x {} classes + {early_stop_size} early-stopping nodes leaves no test nodes out of {n}",
            ds.num_classes()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; n];
    let mut train = Vec::with_capacity(per_class * ds.num_classes());
    for (class, mut nodes) in ds.nodes_by_class().into_iter().enumerate() {
        if nodes.len() < per_class {
            return Err(Error::ClassTooSmall {
                class,
                available: nodes.len(),
                required: per_class,
            });
        }
        let (picked, _) = nodes.partial_shuffle(&mut rng, per_class);
        for &i in picked.iter() {
            in_train[i] = true;
            train.push(i);
        }
    }
    let mut rest: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
    let (picked, _) = rest.partial_shuffle(&mut rng, early_stop_size);
    let mut early_stop = picked.to_vec();
    let es_set: HashSet<usize> = early_stop.iter().copied().collect();
    let test: Vec<usize> = (0..n).filter(|&i| !in_train[i] && !es_set.contains(&i)).collect();
    train.sort_unstable();
    early_stop.sort_unstable();
    Ok(Split {
        train,
        early_stop,
        test,
        seed,
    })
}

/// One-hot labels for the training nodes of `split`.
pub fn labelset_from_split(ds: &Dataset, split: &Split) -> Result<LabelSet> {
    let pairs: Vec<(usize, usize)> = split.train.iter().map(|&i| (i, ds.labels()[i])).collect();
    LabelSet::new(ds.num_nodes(), ds.num_classes(), &pairs)
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    num_nodes: usize,
    num_features: usize,
    num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

fn read_file(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    Ok(fs::read_to_string(path)?)
}

fn data_lines<'a>(text: &'a str) -> impl Iterator<Item = (usize, Vec<&'a str>)> + 'a {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i, l.split('\t').map(str::trim).collect()))
}

fn parse_field<T: FromStr>(file: &str, line: usize, field: &str, what: &str) -> Result<T> {
    field.parse().map_err(|_| Error::Parse {
        file: file.into(),
        line,
        msg: format!("cannot parse {what} from {field:?}"),
    })
}

fn parse_err(file: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.into(),
        line,
        msg: msg.into(),
    }
}

/// Reads a dataset bundle directory (`meta.json`, `edges.tsv`,
/// `features.tsv`, `labels.tsv`).
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let meta: Meta = serde_json::from_str(&read_file(dir, "meta.json")?)?;
    let edges_txt = read_file(dir, "edges.tsv")?;
    let features_txt = read_file(dir, "features.tsv")?;
    let labels_txt = read_file(dir, "labels.tsv")?;
    let n = meta.num_nodes;

    let mut seen = HashSet::new();
    let mut triplets = Vec::new();
    for (line, fields) in data_lines(&edges_txt) {
        if fields.len() < 2 || fields.len() > 3 {
            return Err(parse_err("edges.tsv", line, "expected u<TAB>v[<TAB>weight]"));
        }
        let u: usize = parse_field("edges.tsv", line, fields[0], "node index")?;
        let v: usize = parse_field("edges.tsv", line, fields[1], "node index")?;
        let w: f64 = match fields.get(2) {
            Some(f) => parse_field("edges.tsv", line, f, "edge weight")?,
            None => 1.0,
        };
        if u >= n || v >= n {
            return Err(parse_err(
                "edges.tsv",
                line,
                format!("node index out of range (n = {n})"),
            ));
        }
        if u == v {
            return Err(parse_err("edges.tsv", line, format!("self-loop at node {u}")));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(parse_err("edges.tsv", line, "edge weight must be positive"));
        }
        if !seen.insert((u.min(v), u.max(v))) {
            return Err(parse_err("edges.tsv", line, format!("duplicate edge ({u}, {v})")));
        }
        triplets.push((u, v, w));
        triplets.push((v, u, w));
    }
    let adjacency = SparseMatrix::from_triplets(n, n, triplets)?;

    let mut features = Array2::zeros((n, meta.num_features));
    for (line, fields) in data_lines(&features_txt) {
        if fields.len() != 3 {
            return Err(parse_err("features.tsv", line, "expected node<TAB>feature<TAB>value"));
        }
        let i: usize = parse_field("features.tsv", line, fields[0], "node index")?;
        let j: usize = parse_field("features.tsv", line, fields[1], "feature index")?;
        let v: f64 = parse_field("features.tsv", line, fields[2], "feature value")?;
        if i >= n || j >= meta.num_features {
            return Err(parse_err("features.tsv", line, "index out of declared range"));
        }
        if !v.is_finite() {
            return Err(parse_err("features.tsv", line, "non-finite feature value"));
        }
        features[[i, j]] = v;
    }

    let mut labels = vec![None; n];
    for (line, fields) in data_lines(&labels_txt) {
        if fields.len() != 2 {
            return Err(parse_err("labels.tsv", line, "expected node<TAB>class"));
        }
        let i: usize = parse_field("labels.tsv", line, fields[0], "node index")?;
        let c: usize = parse_field("labels.tsv", line, fields[1], "class")?;
        if i >= n {
            return Err(parse_err(
                "labels.tsv",
                line,
                format!("node index out of range (n = {n})"),
            ));
        }
        if c >= meta.num_classes {
            return Err(parse_err(
                "labels.tsv",
                line,
                format!("class {c} out of range ({} classes)", meta.num_classes),
            ));
        }
        if labels[i].replace(c).is_some() {
            return Err(parse_err("labels.tsv", line, format!("node {i} labelled twice")));
        }
    }
    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| parse_err("labels.tsv", 0, format!("node {i} has no label"))))
        .collect::<Result<Vec<_>>>()?;

    let name = meta.name.unwrap_or_else(|| {
        dir.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    Dataset::new(name, adjacency, features, labels, meta.num_classes)
}

/// Writes `ds` as a bundle readable by [`load_dataset`]. Values round-trip exactly.
pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let meta = Meta {
        num_nodes: ds.num_nodes(),
        num_features: ds.num_features(),
        num_classes: ds.num_classes(),
        name: Some(ds.name().to_string()),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;

    let mut w = BufWriter::new(fs::File::create(dir.join("edges.tsv"))?);
    for (u, v, weight) in ds.adjacency().iter().filter(|&(u, v, _)| u < v) {
        if weight == 1.0 {
            writeln!(w, "{u}\t{v}")?;
        } else {
            writeln!(w, "{u}\t{v}\t{weight}")?;
        }
    }
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join("features.tsv"))?);
    for ((i, j), &v) in ds.features().indexed_iter() {
        if v != 0.0 {
            writeln!(w, "{i}\t{j}\t{v}")?;
        }
    }
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join("labels.tsv"))?);
    for (i, c) in ds.labels().iter().enumerate() {
        writeln!(w, "{i}\t{c}")?;
    }
    w.flush()?;
    Ok(())
}
