//! TU text-format reader and writer.
//!
//! Layout (all files line-oriented, 1-indexed ids, blank lines tolerated):
//! - `NAME_A.txt` — one edge per line as `i, j` over global node ids.
//! - `NAME_graph_indicator.txt` — line `t` holds the graph id of node `t`.
//! - `NAME_graph_labels.txt` — line `g` holds graph `g`'s integer label.
//! - `NAME_node_labels.txt` — optional; line `t` holds node `t`'s label.
//!
//! Whitespace around the comma is accepted. Edges may be listed in one or
//! both directions; either form sets both adjacency entries. Self-loop lines
//! are dropped. Graph labels are remapped to a dense `0..C` range preserving
//! the sorted order of the original values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{DataError, Dataset, Graph, MAX_GRAPH_NODES};

/// In-memory TU file contents, for parsing without a filesystem.
#[derive(Debug, Clone, Copy)]
pub struct TuText<'a> {
    pub edges: &'a str,
    pub graph_indicator: &'a str,
    pub graph_labels: &'a str,
    pub node_labels: Option<&'a str>,
}

/// Reads `root/NAME_*.txt` and parses the dataset.
pub fn parse_tu_dataset(root: &Path, name: &str) -> Result<Dataset, DataError> {
    let read = |suffix: &str, required: bool| -> Result<Option<String>, DataError> {
        let path = root.join(format!("{name}_{suffix}.txt"));
        if !path.is_file() {
            return if required {
                Err(DataError::MissingFile(path))
            } else {
                Ok(None)
            };
        }
        fs::read_to_string(&path)
            .map(Some)
            .map_err(|source| DataError::Io { path, source })
    };

    let edges = read("A", true)?.expect("required");
    let graph_indicator = read("graph_indicator", true)?.expect("required");
    let graph_labels = read("graph_labels", true)?.expect("required");
    let node_labels = read("node_labels", false)?;

    parse_tu_text(
        name,
        TuText {
            edges: &edges,
            graph_indicator: &graph_indicator,
            graph_labels: &graph_labels,
            node_labels: node_labels.as_deref(),
        },
    )
}

/// Non-blank lines with their original 1-based line numbers.
fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_int(file: &str, line: usize, token: &str, what: &str) -> Result<i64, DataError> {
    token
        .trim()
        .parse::<i64>()
        .map_err(|_| DataError::Malformed {
            file: file.into(),
            line,
            msg: format!("cannot parse {what} from '{token}'"),
        })
}

/// Parses TU-format text into a [`Dataset`] (features left unbuilt).
pub fn parse_tu_text(name: &str, text: TuText<'_>) -> Result<Dataset, DataError> {
    let indicator_file = format!("{name}_graph_indicator.txt");
    let labels_file = format!("{name}_graph_labels.txt");
    let edges_file = format!("{name}_A.txt");
    let node_labels_file = format!("{name}_node_labels.txt");

    // Node -> graph assignment. Local node ids follow the order in which a
    // graph's nodes appear in the indicator file.
    let mut node_graph: Vec<usize> = Vec::new(); // 0-based graph id per node
    let mut num_graphs = 0usize;
    for (line, l) in numbered_lines(text.graph_indicator) {
        let gid = parse_int(&indicator_file, line, l, "graph id")?;
        if gid < 1 {
            return Err(DataError::Malformed {
                file: indicator_file.clone(),
                line,
                msg: format!("graph id {gid} is not 1-indexed"),
            });
        }
        let gid = gid as usize;
        num_graphs = num_graphs.max(gid);
        node_graph.push(gid - 1);
    }
    if node_graph.is_empty() {
        return Err(DataError::Malformed {
            file: indicator_file.clone(),
            line: 1,
            msg: "graph indicator is empty".into(),
        });
    }

    let mut node_local: Vec<usize> = Vec::with_capacity(node_graph.len());
    let mut graph_sizes = vec![0usize; num_graphs];
    for &g in &node_graph {
        node_local.push(graph_sizes[g]);
        graph_sizes[g] += 1;
    }
    for (g, &size) in graph_sizes.iter().enumerate() {
        if size == 0 {
            return Err(DataError::EmptyGraph { graph: g + 1 });
        }
        if size > MAX_GRAPH_NODES {
            return Err(DataError::GraphTooLarge {
                graph: g + 1,
                nodes: size,
                limit: MAX_GRAPH_NODES,
            });
        }
    }

    // Graph labels, remapped to a dense range preserving sorted order.
    let mut raw_labels: Vec<i64> = Vec::with_capacity(num_graphs);
    for (line, l) in numbered_lines(text.graph_labels) {
        raw_labels.push(parse_int(&labels_file, line, l, "graph label")?);
    }
    if raw_labels.len() != num_graphs {
        return Err(DataError::Malformed {
            file: labels_file.clone(),
            line: raw_labels.len().max(1),
            msg: format!(
                "{} labels for {} graphs",
                raw_labels.len(),
                num_graphs
            ),
        });
    }
    let mut label_map: BTreeMap<i64, usize> = BTreeMap::new();
    for &l in &raw_labels {
        label_map.entry(l).or_insert(0);
    }
    for (class, (_, v)) in label_map.iter_mut().enumerate() {
        *v = class;
    }
    let original_labels: Vec<i64> = label_map.keys().copied().collect();

    // Adjacency, built per graph from the edge list.
    let mut adjacency: Vec<Vec<u8>> = graph_sizes.iter().map(|&s| vec![0u8; s * s]).collect();
    let total_nodes = node_graph.len();
    for (line, l) in numbered_lines(text.edges) {
        let Some((a_tok, b_tok)) = l.split_once(',') else {
            return Err(DataError::Malformed {
                file: edges_file.clone(),
                line,
                msg: format!("expected 'i, j', got '{l}'"),
            });
        };
        let a = parse_int(&edges_file, line, a_tok, "edge endpoint")?;
        let b = parse_int(&edges_file, line, b_tok, "edge endpoint")?;
        if a < 1 || b < 1 || a as usize > total_nodes || b as usize > total_nodes {
            return Err(DataError::Malformed {
                file: edges_file.clone(),
                line,
                msg: format!("edge ({a}, {b}) references an unknown node (1..={total_nodes})"),
            });
        }
        let (a, b) = (a as usize - 1, b as usize - 1);
        if node_graph[a] != node_graph[b] {
            return Err(DataError::EdgeCrossesGraphs {
                file: edges_file.clone(),
                line,
                a: a + 1,
                b: b + 1,
            });
        }
        if a == b {
            continue; // self-loop line dropped
        }
        let g = node_graph[a];
        let n = graph_sizes[g];
        let (la, lb) = (node_local[a], node_local[b]);
        adjacency[g][la * n + lb] = 1;
        adjacency[g][lb * n + la] = 1;
    }

    // Optional node labels, regrouped per graph.
    let node_labels = match text.node_labels {
        None => None,
        Some(nl_text) => {
            let mut per_node: Vec<i64> = Vec::with_capacity(total_nodes);
            for (line, l) in numbered_lines(nl_text) {
                per_node.push(parse_int(&node_labels_file, line, l, "node label")?);
            }
            if per_node.len() != total_nodes {
                return Err(DataError::Malformed {
                    file: node_labels_file.clone(),
                    line: per_node.len().max(1),
                    msg: format!("{} node labels for {} nodes", per_node.len(), total_nodes),
                });
            }
            let mut grouped: Vec<Vec<i64>> =
                graph_sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
            for (node, &label) in per_node.iter().enumerate() {
                grouped[node_graph[node]].push(label);
            }
            Some(grouped)
        }
    };

    let graphs: Vec<Graph> = adjacency
        .into_iter()
        .zip(&graph_sizes)
        .zip(&raw_labels)
        .map(|((adj, &n), raw)| {
            let mut g = Graph::from_edges(n, &[], label_map[raw])?;
            g.adjacency = adj;
            Ok(g)
        })
        .collect::<Result<_, DataError>>()?;

    Dataset::new(name, graphs, label_map.len(), original_labels, node_labels)
}

/// Writes a dataset back out in TU layout (the parser round-trip partner).
pub fn write_tu_dataset(ds: &Dataset, root: &Path) -> Result<(), DataError> {
    let io_err = |path: &Path, source: std::io::Error| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    fs::create_dir_all(root).map_err(|e| io_err(root, e))?;

    let mut edges = String::new();
    let mut indicator = String::new();
    let mut labels = String::new();
    let mut node_labels = String::new();

    let mut base = 0usize; // global id offset of the current graph
    for (gi, g) in ds.graphs().iter().enumerate() {
        let n = g.node_count();
        for _ in 0..n {
            indicator.push_str(&format!("{}\n", gi + 1));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && g.has_edge(i, j) {
                    edges.push_str(&format!("{}, {}\n", base + i + 1, base + j + 1));
                }
            }
        }
        labels.push_str(&format!("{}\n", ds.original_labels()[g.label()]));
        if let Some(nl) = ds.node_labels() {
            for &l in &nl[gi] {
                node_labels.push_str(&format!("{l}\n"));
            }
        }
        base += n;
    }

    let name = &ds.name;
    let write = |suffix: &str, body: &str| -> Result<(), DataError> {
        let path = root.join(format!("{name}_{suffix}.txt"));
        fs::write(&path, body).map_err(|e| io_err(&path, e))
    };
    write("A", &edges)?;
    write("graph_indicator", &indicator)?;
    write("graph_labels", &labels)?;
    if ds.node_labels().is_some() {
        write("node_labels", &node_labels)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(edges: &str, indicator: &str, labels: &str, node_labels: Option<&str>) -> Result<Dataset, DataError> {
        parse_tu_text(
            "T",
            TuText {
                edges,
                graph_indicator: indicator,
                graph_labels: labels,
                node_labels,
            },
        )
    }

    #[test]
    fn single_edge_is_symmetrized() {
        let ds = parse("1, 2\n", "1\n1\n", "0\n", None).unwrap();
        assert_eq!(ds.len(), 1);
        let g = &ds.graphs()[0];
        assert_eq!(g.node_count(), 2);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 0));
    }

    #[test]
    fn whitespace_and_trailing_blank_lines_are_tolerated() {
        let ds = parse(" 1 ,  2\n2 , 3\n\n\n", "1\n1\n1\n\n", "5\n", None).unwrap();
        let g = &ds.graphs()[0];
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.degrees(), vec![1, 2, 1]);
        assert_eq!(ds.original_labels(), &[5]);
    }

    #[test]
    fn labels_remap_preserving_sorted_order() {
        // Original labels {1, -1}: -1 -> class 0, 1 -> class 1.
        let ds = parse("1, 2\n3, 4\n", "1\n1\n2\n2\n", "1\n-1\n", None).unwrap();
        assert_eq!(ds.num_classes(), 2);
        assert_eq!(ds.original_labels(), &[-1, 1]);
        assert_eq!(ds.graphs()[0].label(), 1);
        assert_eq!(ds.graphs()[1].label(), 0);
    }

    #[test]
    fn self_loops_are_dropped() {
        let ds = parse("1, 1\n1, 2\n", "1\n1\n", "0\n", None).unwrap();
        let g = &ds.graphs()[0];
        assert!(!g.has_edge(0, 0));
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn cross_graph_edge_reports_line_number() {
        let err = parse("1, 2\n2, 3\n", "1\n1\n2\n", "0\n1\n", None).unwrap_err();
        match err {
            DataError::EdgeCrossesGraphs { line, a, b, .. } => {
                assert_eq!(line, 2);
                assert_eq!((a, b), (2, 3));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_graph_is_rejected() {
        // Graph 1 never appears in the indicator.
        let err = parse("1, 2\n", "2\n2\n", "0\n1\n", None).unwrap_err();
        assert!(matches!(err, DataError::EmptyGraph { graph: 1 }));
    }

    #[test]
    fn missing_file_is_named() {
        let err = parse_tu_dataset(Path::new("/nonexistent-dir"), "NOPE").unwrap_err();
        match err {
            DataError::MissingFile(path) => {
                assert!(path.to_string_lossy().ends_with("NOPE_A.txt"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn label_count_mismatch_is_an_error() {
        let err = parse("1, 2\n", "1\n1\n", "0\n1\n", None).unwrap_err();
        assert!(matches!(err, DataError::Malformed { .. }));
    }

    #[test]
    fn node_labels_are_grouped_per_graph() {
        let ds = parse("1, 2\n", "1\n1\n2\n", "0\n1\n", Some("7\n8\n9\n")).unwrap();
        let nl = ds.node_labels().unwrap();
        assert_eq!(nl[0], vec![7, 8]);
        assert_eq!(nl[1], vec![9]);
    }
}
