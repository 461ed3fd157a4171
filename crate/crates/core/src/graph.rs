//! Graphs, TU-benchmark ingestion, dataset statistics and fold splitting.
//!
//! The TU text format stores one dataset as several files in a directory:
//!
//! - `NAME_A.txt`: `row, col` edge pairs over 1-indexed global node ids
//! - `NAME_graph_indicator.txt`: the 1-indexed graph id of each node
//! - `NAME_graph_labels.txt`: one class label per graph
//! - `NAME_node_labels.txt` (optional): one categorical label per node
//!
//! Attribute and edge-label files are ignored. Datasets without node labels
//! fall back to degree labels over a dataset-wide degree vocabulary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Undirected, unweighted graph with categorical node labels.
///
/// Adjacency lists are strictly increasing, symmetric and free of
/// self-loops. Row `i` of the feature matrix one-hot encodes
/// `node_labels[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    adj: Arc<Vec<Vec<usize>>>,
    node_labels: Vec<usize>,
    features: Tensor,
    label: usize,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Duplicate edges in
    /// either direction collapse and self-loops are dropped.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize)],
        node_labels: Vec<usize>,
        num_node_labels: usize,
        label: usize,
    ) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            for v in [a, b] {
                if v >= n {
                    return Err(Error::Index {
                        op: "graph edge",
                        index: v,
                        len: n,
                    });
                }
            }
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Self::from_adjacency(adj, node_labels, num_node_labels, label)
    }

    /// Builds a graph from canonical adjacency lists, validating every
    /// structural invariant.
    pub fn from_adjacency(
        adj: Vec<Vec<usize>>,
        node_labels: Vec<usize>,
        num_node_labels: usize,
        label: usize,
    ) -> Result<Self> {
        let n = adj.len();
        if node_labels.len() != n {
            return Err(Error::Dimension {
                op: "graph node labels",
                lhs: (n, 1),
                rhs: (node_labels.len(), 1),
            });
        }
        for (i, list) in adj.iter().enumerate() {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Contract(format!(
                    "adjacency of node {i} is not strictly increasing"
                )));
            }
            for &j in list {
                if j >= n {
                    return Err(Error::Index {
                        op: "graph adjacency",
                        index: j,
                        len: n,
                    });
                }
                if j == i {
                    return Err(Error::Contract(format!("self-loop at node {i}")));
                }
                if adj[j].binary_search(&i).is_err() {
                    return Err(Error::Contract(format!("edge ({i},{j}) is not symmetric")));
                }
            }
        }
        let features = one_hot(&node_labels, num_node_labels)?;
        Ok(Self {
            adj: Arc::new(adj),
            node_labels,
            features,
            label,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    /// Undirected edges, each counted once.
    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adj
    }

    pub fn shared_adjacency(&self) -> Arc<Vec<Vec<usize>>> {
        Arc::clone(&self.adj)
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn node_labels(&self) -> &[usize] {
        &self.node_labels
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn label(&self) -> usize {
        self.label
    }

    /// Same structure and class, new node labels.
    pub fn with_node_labels(
        &self,
        node_labels: Vec<usize>,
        num_node_labels: usize,
    ) -> Result<Self> {
        Self::from_adjacency(
            (*self.adj).clone(),
            node_labels,
            num_node_labels,
            self.label,
        )
    }
}

fn one_hot(labels: &[usize], width: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(labels.len(), width);
    for (i, &l) in labels.iter().enumerate() {
        if l >= width {
            return Err(Error::Index {
                op: "one-hot node label",
                index: l,
                len: width,
            });
        }
        t.set(i, l, 1.0);
    }
    Ok(t)
}

/// Relabels every node with its degree, using one degree vocabulary shared
/// across all `graphs` so feature widths agree. Returns the relabelled
/// graphs and the vocabulary size.
pub fn degree_labels(graphs: &[Graph]) -> Result<(Vec<Graph>, usize)> {
    let mut vocab: Vec<usize> = graphs
        .iter()
        .flat_map(|g| (0..g.num_nodes()).map(|i| g.degree(i)))
        .collect();
    vocab.sort_unstable();
    vocab.dedup();
    let out = graphs
        .iter()
        .map(|g| {
            let labels = (0..g.num_nodes())
                .map(|i| {
                    vocab
                        .binary_search(&g.degree(i))
                        .expect("degree in vocabulary")
                })
                .collect();
            g.with_node_labels(labels, vocab.len())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((out, vocab.len()))
}

/// A labelled collection of graphs sharing one node-label vocabulary.
#[derive(Clone, Debug)]
pub struct Dataset {
    name: String,
    graphs: Vec<Graph>,
    num_classes: usize,
    num_node_labels: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        graphs: Vec<Graph>,
        num_classes: usize,
        num_node_labels: usize,
    ) -> Result<Self> {
        for (gi, g) in graphs.iter().enumerate() {
            if g.label() >= num_classes {
                return Err(Error::Contract(format!(
                    "graph {gi} has class {} but only {num_classes} classes exist",
                    g.label()
                )));
            }
            if g.feature_dim() != num_node_labels {
                return Err(Error::Contract(format!(
                    "graph {gi} has feature width {} instead of {num_node_labels}",
                    g.feature_dim()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            graphs,
            num_classes,
            num_node_labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_node_labels(&self) -> usize {
        self.num_node_labels
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(Graph::label).collect()
    }

    pub fn max_nodes(&self) -> usize {
        self.graphs.iter().map(Graph::num_nodes).max().unwrap_or(0)
    }

    pub fn avg_nodes(&self) -> f64 {
        mean(self.graphs.iter().map(Graph::num_nodes))
    }

    pub fn avg_edges(&self) -> f64 {
        mean(self.graphs.iter().map(Graph::num_edges))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for g in &self.graphs {
            counts[g.label()] += 1;
        }
        counts
    }

    /// Replaces node labels with dataset-wide degree labels.
    pub fn with_degree_labels(&self) -> Result<Self> {
        let (graphs, vocab) = degree_labels(&self.graphs)?;
        Self::new(self.name.clone(), graphs, self.num_classes, vocab)
    }
}

fn mean(values: impl Iterator<Item = usize>) -> f64 {
    let (sum, count) = values.fold((0usize, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum as f64 / count as f64
    }
}

fn tu_file(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

fn read_required(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses non-empty lines of comma-separated integers, checking each line
/// has `width` fields.
fn parse_int_lines(path: &Path, text: &str, width: usize) -> Result<Vec<(usize, Vec<i64>)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<i64>().map_err(|_| Error::Format {
                    file: path.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("non-integer token {:?}", tok.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if fields.len() != width {
            return Err(Error::Format {
                file: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("expected {width} field(s), found {}", fields.len()),
            });
        }
        out.push((lineno + 1, fields));
    }
    Ok(out)
}

/// Maps each distinct raw value to its rank among the sorted distinct values.
fn contiguous_ids(raw: &[i64]) -> (Vec<usize>, usize) {
    let mut sorted = raw.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let ids = raw
        .iter()
        .map(|v| sorted.binary_search(v).expect("value present"))
        .collect();
    (ids, sorted.len())
}

/// Loads `name` from a TU-format directory.
pub fn parse_tu_dataset(dir: impl AsRef<Path>, name: &str) -> Result<Dataset> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let a_path = tu_file(dir, name, "A");
    let ind_path = tu_file(dir, name, "graph_indicator");
    let gl_path = tu_file(dir, name, "graph_labels");
    let nl_path = tu_file(dir, name, "node_labels");

    let edges = parse_int_lines(&a_path, &read_required(&a_path)?, 2)?;
    let indicator = parse_int_lines(&ind_path, &read_required(&ind_path)?, 1)?;
    let graph_labels = parse_int_lines(&gl_path, &read_required(&gl_path)?, 1)?;

    let num_graphs = graph_labels.len();
    let total_nodes = indicator.len();

    // global node -> (graph, local id)
    let mut owner = Vec::with_capacity(total_nodes);
    let mut sizes = vec![0usize; num_graphs];
    for (line, fields) in &indicator {
        let gid = fields[0];
        if gid < 1 || gid as usize > num_graphs {
            return Err(Error::Format {
                file: ind_path.clone(),
                line: *line,
                msg: format!("graph id {gid} outside 1..={num_graphs}"),
            });
        }
        let g = gid as usize - 1;
        owner.push((g, sizes[g]));
        sizes[g] += 1;
    }

    let mut graph_edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    for (line, fields) in &edges {
        let mut ends = [(0usize, 0usize); 2];
        for (slot, &v) in ends.iter_mut().zip(fields) {
            if v < 1 || v as usize > total_nodes {
                return Err(Error::Format {
                    file: a_path.clone(),
                    line: *line,
                    msg: format!("node id {v} outside 1..={total_nodes}"),
                });
            }
            *slot = owner[v as usize - 1];
        }
        if ends[0].0 != ends[1].0 {
            return Err(Error::Format {
                file: a_path.clone(),
                line: *line,
                msg: format!(
                    "edge ({}, {}) joins graphs {} and {}",
                    fields[0],
                    fields[1],
                    ends[0].0 + 1,
                    ends[1].0 + 1
                ),
            });
        }
        graph_edges[ends[0].0].push((ends[0].1, ends[1].1));
    }

    let raw_graph_labels: Vec<i64> = graph_labels.iter().map(|(_, f)| f[0]).collect();
    let (class_ids, num_classes) = contiguous_ids(&raw_graph_labels);

    let node_label_ids = if nl_path.is_file() {
        let rows = parse_int_lines(&nl_path, &read_required(&nl_path)?, 1)?;
        if rows.len() != total_nodes {
            return Err(Error::Format {
                file: nl_path.clone(),
                line: rows.len(),
                msg: format!("expected {total_nodes} node labels, found {}", rows.len()),
            });
        }
        let raw: Vec<i64> = rows.iter().map(|(_, f)| f[0]).collect();
        Some(contiguous_ids(&raw))
    } else {
        None
    };

    let mut per_graph_labels: Vec<Vec<usize>> = sizes.iter().map(|&s| vec![0; s]).collect();
    let vocab = match &node_label_ids {
        Some((ids, vocab)) => {
            for (global, &(g, local)) in owner.iter().enumerate() {
                per_graph_labels[g][local] = ids[global];
            }
            *vocab
        }
        None => 1,
    };

    let graphs = (0..num_graphs)
        .map(|g| {
            Graph::from_edges(
                sizes[g],
                &graph_edges[g],
                std::mem::take(&mut per_graph_labels[g]),
                vocab,
                class_ids[g],
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let dataset = Dataset::new(name, graphs, num_classes, vocab)?;
    if node_label_ids.is_none() {
        dataset.with_degree_labels()
    } else {
        Ok(dataset)
    }
}

/// Writes a dataset in TU format (node labels always included).
pub fn write_tu_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = dataset.name();
    let (mut a, mut ind, mut gl, mut nl) =
        (String::new(), String::new(), String::new(), String::new());
    let mut offset = 0;
    for (gi, g) in dataset.graphs().iter().enumerate() {
        for i in 0..g.num_nodes() {
            for &j in g.neighbors(i) {
                let _ = writeln!(a, "{}, {}", offset + i + 1, offset + j + 1);
            }
            let _ = writeln!(ind, "{}", gi + 1);
            let _ = writeln!(nl, "{}", g.node_labels()[i]);
        }
        let _ = writeln!(gl, "{}", g.label());
        offset += g.num_nodes();
    }
    for (suffix, body) in [
        ("A", a),
        ("graph_indicator", ind),
        ("graph_labels", gl),
        ("node_labels", nl),
    ] {
        let path = tu_file(dir, name, suffix);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Synthetic two-class dataset in which every node carries its graph's
/// class as its label, so one input feature decides the class. Structure
/// is random: `per_class` graphs of each class, 4 to 12 nodes, edge
/// probability 0.3.
pub fn separable_dataset(per_class: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(2 * per_class);
    for i in 0..2 * per_class {
        let class = i % 2;
        let n = rng.gen_range(4..=12);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.gen_bool(0.3) {
                    edges.push((a, b));
                }
            }
        }
        graphs.push(Graph::from_edges(n, &edges, vec![class; n], 2, class)?);
    }
    Dataset::new("SEPARABLE", graphs, 2, 2)
}

/// Summary statistics in the layout of the usual benchmark tables.
#[derive(Clone, Debug, PartialEq)]
pub struct StatsRecord {
    pub name: String,
    pub graphs: usize,
    pub max_nodes: usize,
    pub avg_nodes: f64,
    pub avg_edges: f64,
    pub node_labels: usize,
    pub classes: usize,
    pub class_counts: Vec<usize>,
}

pub fn dataset_stats(d: &Dataset) -> StatsRecord {
    StatsRecord {
        name: d.name().to_string(),
        graphs: d.len(),
        max_nodes: d.max_nodes(),
        avg_nodes: d.avg_nodes(),
        avg_edges: d.avg_edges(),
        node_labels: d.num_node_labels(),
        classes: d.num_classes(),
        class_counts: d.class_counts(),
    }
}

impl StatsRecord {
    pub const CSV_HEADER: &'static str =
        "dataset,graphs,max_nodes,avg_nodes,avg_edges,node_labels,classes,class_counts";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{:.2},{:.2},{},{},{}",
            self.name,
            self.graphs,
            self.max_nodes,
            self.avg_nodes,
            self.avg_edges,
            self.node_labels,
            self.classes,
            join(&self.class_counts, ";")
        )
    }

    pub fn to_table(&self) -> String {
        let header = [
            "Dataset",
            "Graphs",
            "Nodes (max)",
            "Nodes (avg.)",
            "Edges (avg.)",
            "Node Labels",
            "Classes",
            "Class counts",
        ];
        let row = [
            self.name.clone(),
            self.graphs.to_string(),
            self.max_nodes.to_string(),
            format!("{:.2}", self.avg_nodes),
            format!("{:.2}", self.avg_edges),
            self.node_labels.to_string(),
            self.classes.to_string(),
            join(&self.class_counts, "/"),
        ];
        let widths: Vec<usize> = header
            .iter()
            .zip(&row)
            .map(|(h, r)| h.len().max(r.len()))
            .collect();
        let line = |cells: Vec<&str>| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        format!(
            "{}\n{}\n",
            line(header.to_vec()),
            line(row.iter().map(String::as_str).collect())
        )
    }
}

fn join(values: &[usize], sep: &str) -> String {
    values
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(sep)
}

/// One cross-validation fold: index lists into the dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold_id: usize,
    pub train_idx: Vec<usize>,
    pub valid_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

/// Per-fold, per-class member counts. Fold sizes differ by at most one, and
/// every count is the floor or ceiling of `fold_size * class_size / n`, so
/// each test fold's class mix is within one graph of the global mix.
fn fold_class_counts(n: usize, folds: usize, class_sizes: &[usize]) -> Vec<Vec<usize>> {
    let fold_sizes: Vec<usize> = (0..folds)
        .map(|f| n / folds + usize::from(f < n % folds))
        .collect();
    let mut counts = vec![vec![0; class_sizes.len()]; folds];
    let mut row_left = fold_sizes.clone();
    let mut col_left = class_sizes.to_vec();
    // `open[f][c]`: the target is fractional, so the cell may take one more.
    let mut open = vec![vec![false; class_sizes.len()]; folds];
    for (f, &t) in fold_sizes.iter().enumerate() {
        for (c, &s) in class_sizes.iter().enumerate() {
            let floor = t * s / n;
            counts[f][c] = floor;
            open[f][c] = t * s % n != 0;
            row_left[f] -= floor;
            col_left[c] -= floor;
        }
    }
    // Hand out the remaining units with augmenting paths over the open
    // cells; a path may move an earlier unit to another class in its fold.
    fn augment(
        f: usize,
        open: &[Vec<bool>],
        taken: &mut [Vec<bool>],
        col_left: &mut [usize],
        seen: &mut [bool],
    ) -> bool {
        for c in 0..col_left.len() {
            if !open[f][c] || taken[f][c] || seen[c] {
                continue;
            }
            seen[c] = true;
            if col_left[c] > 0 {
                col_left[c] -= 1;
                taken[f][c] = true;
                return true;
            }
            for g in 0..taken.len() {
                if g != f && taken[g][c] && open[g].iter().zip(&taken[g]).any(|(&o, &t)| o && !t) {
                    taken[g][c] = false;
                    if augment(g, open, taken, col_left, seen) {
                        taken[f][c] = true;
                        return true;
                    }
                    taken[g][c] = true;
                }
            }
        }
        false
    }
    let mut taken = vec![vec![false; class_sizes.len()]; folds];
    for (f, &need) in row_left.iter().enumerate() {
        for _ in 0..need {
            let mut seen = vec![false; class_sizes.len()];
            let placed = augment(f, &open, &mut taken, &mut col_left, &mut seen);
            assert!(placed, "controlled rounding always exists");
        }
    }
    for f in 0..folds {
        for c in 0..class_sizes.len() {
            counts[f][c] += usize::from(taken[f][c]);
        }
    }
    counts
}

/// Stratified `folds`-way split. Members of each class are shuffled with
/// `seed` and split across partitions by [`fold_class_counts`]. Fold `f` tests on partition `f`, validates on `(f+1) mod folds`
/// and trains on the rest.
pub fn stratified_kfold(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if folds < 3 {
        return Err(Error::Config(format!("need at least 3 folds, got {folds}")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    for (class, members) in &by_class {
        if members.len() < folds {
            return Err(Error::Config(format!(
                "class {class} has {} graphs, fewer than {folds} folds",
                members.len()
            )));
        }
    }
    let sizes: Vec<usize> = by_class.values().map(Vec::len).collect();
    let counts = fold_class_counts(labels.len(), folds, &sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut partitions = vec![Vec::new(); folds];
    for (c, mut members) in by_class.into_values().enumerate() {
        members.shuffle(&mut rng);
        let mut rest = members.into_iter();
        for (f, part) in partitions.iter_mut().enumerate() {
            part.extend(rest.by_ref().take(counts[f][c]));
        }
    }
    for p in &mut partitions {
        p.sort_unstable();
    }
    Ok((0..folds)
        .map(|f| {
            let valid = (f + 1) % folds;
            let mut train: Vec<usize> = (0..folds)
                .filter(|&p| p != f && p != valid)
                .flat_map(|p| partitions[p].iter().copied())
                .collect();
            train.sort_unstable();
            FoldSplit {
                fold_id: f,
                train_idx: train,
                valid_idx: partitions[valid].clone(),
                test_idx: partitions[f].clone(),
            }
        })
        .collect())
}

/// Outcome of the pooling-size rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KSelection {
    Fixed(usize),
    /// Candidates to be chosen by validation accuracy.
    Search(Vec<usize>),
}

impl KSelection {
    pub fn candidates(&self) -> Vec<usize> {
        match self {
            KSelection::Fixed(k) => vec![*k],
            KSelection::Search(ks) => ks.clone(),
        }
    }
}

pub const SMALL_GRAPH_AVG_NODES: f64 = 30.0;
pub const LARGE_GRAPH_AVG_NODES: f64 = 200.0;

/// True when the dataset falls under the large-graph rule (which also
/// switches on L2 regularisation).
pub fn is_large_graph_dataset(d: &Dataset) -> bool {
    d.avg_nodes() > LARGE_GRAPH_AVG_NODES
}

/// Pooling size: 30 for small graphs; for large graphs the smallest `k`
/// such that 50% (biological) or 90% (social) of graphs have at most `k`
/// nodes; otherwise a search over {30, 50}.
pub fn select_k(d: &Dataset, is_social: bool) -> KSelection {
    let avg = d.avg_nodes();
    if avg < SMALL_GRAPH_AVG_NODES {
        KSelection::Fixed(30)
    } else if avg > LARGE_GRAPH_AVG_NODES {
        let fraction = if is_social { 0.9 } else { 0.5 };
        KSelection::Fixed(size_quantile(d, fraction))
    } else {
        KSelection::Search(vec![30, 50])
    }
}

fn size_quantile(d: &Dataset, fraction: f64) -> usize {
    let mut sizes: Vec<usize> = d.graphs().iter().map(Graph::num_nodes).collect();
    sizes.sort_unstable();
    if sizes.is_empty() {
        return 0;
    }
    let need = ((fraction * sizes.len() as f64).ceil() as usize).clamp(1, sizes.len());
    sizes[need - 1]
}
