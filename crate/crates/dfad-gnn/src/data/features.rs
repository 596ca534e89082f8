//! Node-feature construction policies.
//!
//! The benchmarks carry no ready-made feature matrices; features are derived
//! from node labels when the dataset provides them (the bioinformatics
//! convention) or from node degrees otherwise (the social-network
//! convention).

use std::collections::BTreeMap;

use super::{DataError, Dataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeaturePolicy {
    /// One-hot over the distinct node labels in the dataset; requires the
    /// node-labels file.
    NodeLabelOnehot,
    /// One-hot over node degree, with degrees above `cap` bucketed into the
    /// top bin.
    DegreeOnehot { cap: usize },
    /// A single all-ones feature.
    Constant,
}

impl FeaturePolicy {
    /// The conventional default: label one-hots when node labels exist,
    /// degree one-hots (cap 64) otherwise.
    pub fn default_for(ds: &Dataset) -> FeaturePolicy {
        if ds.node_labels().is_some() {
            FeaturePolicy::NodeLabelOnehot
        } else {
            FeaturePolicy::DegreeOnehot { cap: 64 }
        }
    }
}

/// Builds an `n x T` feature matrix for every graph and returns the enriched
/// dataset. Rows are exact one-hots (or all-ones under `Constant`).
pub fn build_features(ds: &Dataset, policy: FeaturePolicy) -> Result<Dataset, DataError> {
    let mut out = ds.clone();
    match policy {
        FeaturePolicy::Constant => {
            for g in out.graphs_mut() {
                let n = g.node_count();
                g.set_features(1, vec![1.0; n]);
            }
            out.set_feature_dim(1);
        }
        FeaturePolicy::DegreeOnehot { cap } => {
            let max_degree = ds
                .graphs()
                .iter()
                .flat_map(|g| g.degrees())
                .max()
                .unwrap_or(0);
            let dim = max_degree.min(cap) + 1;
            for g in out.graphs_mut() {
                let n = g.node_count();
                let mut features = vec![0.0; n * dim];
                for (i, d) in g.degrees().into_iter().enumerate() {
                    features[i * dim + d.min(cap)] = 1.0;
                }
                g.set_features(dim, features);
            }
            out.set_feature_dim(dim);
        }
        FeaturePolicy::NodeLabelOnehot => {
            let node_labels = ds.node_labels().ok_or(DataError::NodeLabelsRequired)?;
            let mut label_bins: BTreeMap<i64, usize> = BTreeMap::new();
            for per_graph in node_labels {
                for &l in per_graph {
                    label_bins.entry(l).or_insert(0);
                }
            }
            for (bin, (_, v)) in label_bins.iter_mut().enumerate() {
                *v = bin;
            }
            let dim = label_bins.len();
            let node_labels = node_labels.clone();
            for (gi, g) in out.graphs_mut().iter_mut().enumerate() {
                let n = g.node_count();
                let mut features = vec![0.0; n * dim];
                for (i, l) in node_labels[gi].iter().enumerate() {
                    features[i * dim + label_bins[l]] = 1.0;
                }
                g.set_features(dim, features);
            }
            out.set_feature_dim(dim);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Graph;

    fn path3() -> Dataset {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)], 0).unwrap();
        let g2 = Graph::from_edges(2, &[(0, 1)], 1).unwrap();
        Dataset::new("t", vec![g, g2], 2, vec![0, 1], None).unwrap()
    }

    #[test]
    fn degree_onehot_marks_each_degree() {
        let ds = build_features(&path3(), FeaturePolicy::DegreeOnehot { cap: 10 }).unwrap();
        // Max degree 2 -> T = 3; path rows one-hot at degrees [1, 2, 1].
        assert_eq!(ds.feature_dim(), 3);
        let g = &ds.graphs()[0];
        assert_eq!(g.feature_row(0), &[0.0, 1.0, 0.0]);
        assert_eq!(g.feature_row(1), &[0.0, 0.0, 1.0]);
        assert_eq!(g.feature_row(2), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn degree_onehot_caps_into_top_bin() {
        // Star with center degree 12, cap 10 -> center lands in bin 10.
        let edges: Vec<(usize, usize)> = (1..13).map(|i| (0, i)).collect();
        let star = Graph::from_edges(13, &edges, 0).unwrap();
        let tiny = Graph::from_edges(2, &[(0, 1)], 1).unwrap();
        let ds = Dataset::new("t", vec![star, tiny], 2, vec![0, 1], None).unwrap();
        let ds = build_features(&ds, FeaturePolicy::DegreeOnehot { cap: 10 }).unwrap();
        assert_eq!(ds.feature_dim(), 11);
        let center = ds.graphs()[0].feature_row(0);
        assert_eq!(center[10], 1.0);
        assert_eq!(center.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn node_label_onehot_uses_distinct_labels() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)], 0).unwrap();
        let g2 = Graph::from_edges(2, &[(0, 1)], 1).unwrap();
        let ds = Dataset::new(
            "t",
            vec![g, g2],
            2,
            vec![0, 1],
            Some(vec![vec![0, 1, 0], vec![1, 1]]),
        )
        .unwrap();
        let ds = build_features(&ds, FeaturePolicy::NodeLabelOnehot).unwrap();
        assert_eq!(ds.feature_dim(), 2);
        let g = &ds.graphs()[0];
        assert_eq!(g.feature_row(0), &[1.0, 0.0]);
        assert_eq!(g.feature_row(1), &[0.0, 1.0]);
        assert_eq!(g.feature_row(2), &[1.0, 0.0]);
    }

    #[test]
    fn node_label_policy_without_labels_is_rejected() {
        let err = build_features(&path3(), FeaturePolicy::NodeLabelOnehot).unwrap_err();
        assert!(matches!(err, DataError::NodeLabelsRequired));
    }

    #[test]
    fn constant_policy_gives_all_ones() {
        let ds = build_features(&path3(), FeaturePolicy::Constant).unwrap();
        assert_eq!(ds.feature_dim(), 1);
        assert_eq!(ds.graphs()[0].features(), &[1.0, 1.0, 1.0]);
    }
}
