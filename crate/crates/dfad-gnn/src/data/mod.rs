//! Graph-classification datasets: TU-format ingestion, node features,
//! stratified fold plans, and padded batching.

mod batch;
mod features;
mod folds;
pub mod synthetic;
mod tu;

pub use batch::{make_batch, GraphBatch};
pub use features::{build_features, FeaturePolicy};
pub use folds::{stratified_kfold, FoldPlan};
pub use tu::{parse_tu_dataset, parse_tu_text, write_tu_dataset, TuText};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing dataset file: {0}")]
    MissingFile(PathBuf),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file} line {line}: {msg}")]
    Malformed {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("{file} line {line}: edge ({a}, {b}) crosses a graph boundary")]
    EdgeCrossesGraphs {
        file: String,
        line: usize,
        a: usize,
        b: usize,
    },
    #[error("graph {graph} is empty")]
    EmptyGraph { graph: usize },
    #[error("graph {graph} has {nodes} nodes; the dense representation caps graphs at {limit}")]
    GraphTooLarge {
        graph: usize,
        nodes: usize,
        limit: usize,
    },
    #[error("feature policy 'node-label-onehot' requires the node-labels file; use 'degree-onehot' instead")]
    NodeLabelsRequired,
    #[error("cannot split {n} graphs into {k} folds")]
    TooFewGraphs { k: usize, n: usize },
    #[error("batch requires at least one graph")]
    EmptyBatch,
    #[error("requested pad size {requested} is below the largest graph in the batch ({max})")]
    PadTooSmall { requested: usize, max: usize },
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

/// Largest per-graph node count the dense `n x n` adjacency storage accepts.
/// Every benchmark in scope sits far below this.
pub const MAX_GRAPH_NODES: usize = 4096;

/// One labeled graph: symmetric binary adjacency with a zero diagonal, an
/// optional `n x T` feature matrix, and a dense class index.
#[derive(Clone, Debug)]
pub struct Graph {
    n: usize,
    adjacency: Vec<u8>,
    features: Vec<f64>,
    feature_dim: usize,
    label: usize,
}

impl Graph {
    /// Builds a graph from undirected edges over nodes `0..n`. Listing an
    /// edge in either (or both) directions sets both adjacency entries;
    /// self-loops are ignored.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], label: usize) -> Result<Self, DataError> {
        if n == 0 {
            return Err(DataError::EmptyGraph { graph: 0 });
        }
        if n > MAX_GRAPH_NODES {
            return Err(DataError::GraphTooLarge {
                graph: 0,
                nodes: n,
                limit: MAX_GRAPH_NODES,
            });
        }
        let mut adjacency = vec![0u8; n * n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(DataError::Invalid(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            if a == b {
                continue;
            }
            adjacency[a * n + b] = 1;
            adjacency[b * n + a] = 1;
        }
        Ok(Graph {
            n,
            adjacency,
            features: Vec::new(),
            feature_dim: 0,
            label,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a * self.n + b] != 0
    }

    /// Flat row-major `n x n` adjacency with entries in {0, 1}.
    pub fn adjacency(&self) -> &[u8] {
        &self.adjacency
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|&v| v as usize).sum::<usize>() / 2
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n)
            .map(|i| {
                self.adjacency[i * self.n..(i + 1) * self.n]
                    .iter()
                    .map(|&v| v as usize)
                    .sum()
            })
            .collect()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Flat row-major `n x T` feature matrix (empty until features are built).
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub(crate) fn set_features(&mut self, feature_dim: usize, features: Vec<f64>) {
        debug_assert_eq!(features.len(), self.n * feature_dim);
        self.feature_dim = feature_dim;
        self.features = features;
    }

    pub(crate) fn set_label(&mut self, label: usize) {
        self.label = label;
    }

    fn validate(&self, graph_idx: usize) -> Result<(), DataError> {
        let n = self.n;
        for i in 0..n {
            if self.adjacency[i * n + i] != 0 {
                return Err(DataError::Invalid(format!(
                    "graph {graph_idx}: nonzero diagonal at node {i}"
                )));
            }
            for j in (i + 1)..n {
                if self.adjacency[i * n + j] != self.adjacency[j * n + i] {
                    return Err(DataError::Invalid(format!(
                        "graph {graph_idx}: asymmetric adjacency at ({i}, {j})"
                    )));
                }
            }
        }
        if self.features.len() != n * self.feature_dim {
            return Err(DataError::Invalid(format!(
                "graph {graph_idx}: feature matrix has wrong row count"
            )));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Invalid(format!(
                "graph {graph_idx}: non-finite feature value"
            )));
        }
        Ok(())
    }
}

/// A named collection of graphs with dense class labels `0..C`.
///
/// `original_labels[c]` records the raw label value that was remapped to
/// class `c` (remapping preserves the sorted order of the originals).
/// Per-node labels, when the source provides them, are retained for the
/// one-hot feature policy and for writing the dataset back out.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    graphs: Vec<Graph>,
    num_classes: usize,
    feature_dim: usize,
    original_labels: Vec<i64>,
    node_labels: Option<Vec<Vec<i64>>>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        graphs: Vec<Graph>,
        num_classes: usize,
        original_labels: Vec<i64>,
        node_labels: Option<Vec<Vec<i64>>>,
    ) -> Result<Self, DataError> {
        let ds = Dataset {
            name: name.into(),
            feature_dim: graphs.first().map_or(0, |g| g.feature_dim),
            graphs,
            num_classes,
            original_labels,
            node_labels,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.graphs.is_empty() {
            return Err(DataError::Invalid("dataset holds no graphs".into()));
        }
        if self.original_labels.len() != self.num_classes {
            return Err(DataError::Invalid(
                "original label table does not match class count".into(),
            ));
        }
        let mut seen = vec![false; self.num_classes];
        for (idx, g) in self.graphs.iter().enumerate() {
            if g.label >= self.num_classes {
                return Err(DataError::Invalid(format!(
                    "graph {idx}: label {} out of range 0..{}",
                    g.label, self.num_classes
                )));
            }
            seen[g.label] = true;
            if g.feature_dim != self.feature_dim {
                return Err(DataError::Invalid(format!(
                    "graph {idx}: feature dim {} differs from dataset dim {}",
                    g.feature_dim, self.feature_dim
                )));
            }
            g.validate(idx)?;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(DataError::Invalid(format!("class {c} has no graphs")));
        }
        if let Some(nl) = &self.node_labels {
            if nl.len() != self.graphs.len() {
                return Err(DataError::Invalid(
                    "node-label table does not match graph count".into(),
                ));
            }
            for (idx, (labels, g)) in nl.iter().zip(&self.graphs).enumerate() {
                if labels.len() != g.n {
                    return Err(DataError::Invalid(format!(
                        "graph {idx}: node-label count differs from node count"
                    )));
                }
            }
        }
        Ok(())
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

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn original_labels(&self) -> &[i64] {
        &self.original_labels
    }

    pub fn node_labels(&self) -> Option<&Vec<Vec<i64>>> {
        self.node_labels.as_ref()
    }

    pub fn avg_nodes(&self) -> f64 {
        let total: usize = self.graphs.iter().map(|g| g.n).sum();
        total as f64 / self.graphs.len() as f64
    }

    /// Per-class graph counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for g in &self.graphs {
            counts[g.label] += 1;
        }
        counts
    }

    pub(crate) fn graphs_mut(&mut self) -> &mut Vec<Graph> {
        &mut self.graphs
    }

    pub(crate) fn set_feature_dim(&mut self, dim: usize) {
        self.feature_dim = dim;
    }
}
