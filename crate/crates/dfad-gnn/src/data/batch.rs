//! Padded batches of variable-size graphs.

use crate::tensor::Tensor;

use super::{DataError, Graph};

/// A batch of graphs padded to a common node count.
///
/// Logically the batch is a `B x N_max x T` feature block, a
/// `B x N_max x N_max` adjacency block, and a `B x N_max` node mask; it is
/// stored as one rank-2 tensor per member so model forwards and the
/// generator's tape can address graphs individually. Padded rows and columns
/// are exactly zero, and `node_mask[b]` sums to the member's true node count.
pub struct GraphBatch {
    pub n_max: usize,
    /// Per-graph `[n_max, T]` feature matrices.
    pub features: Vec<Tensor>,
    /// Per-graph `[n_max, n_max]` adjacency matrices (hard 0/1 for real data;
    /// soft or straight-through tensors for generated batches).
    pub adjacency: Vec<Tensor>,
    /// Per-graph `[n_max]` 0/1 node masks.
    pub node_mask: Vec<Tensor>,
    pub labels: Option<Vec<usize>>,
}

impl GraphBatch {
    pub fn size(&self) -> usize {
        self.features.len()
    }
}

/// Pads `graphs` to a shared node count (default: the largest member) and
/// zero-fills features and adjacency beyond each graph's true size.
pub fn make_batch(graphs: &[&Graph], n_max: Option<usize>) -> Result<GraphBatch, DataError> {
    if graphs.is_empty() {
        return Err(DataError::EmptyBatch);
    }
    let largest = graphs.iter().map(|g| g.node_count()).max().unwrap_or(0);
    let n_max = match n_max {
        Some(requested) if requested < largest => {
            return Err(DataError::PadTooSmall {
                requested,
                max: largest,
            })
        }
        Some(requested) => requested,
        None => largest,
    };

    let feature_dim = graphs[0].feature_dim();
    let mut features = Vec::with_capacity(graphs.len());
    let mut adjacency = Vec::with_capacity(graphs.len());
    let mut node_mask = Vec::with_capacity(graphs.len());
    for g in graphs {
        let n = g.node_count();
        let mut f = vec![0.0; n_max * feature_dim];
        f[..n * feature_dim].copy_from_slice(g.features());
        features.push(Tensor::from_vec(&[n_max, feature_dim], f).expect("sized above"));

        let mut a = vec![0.0; n_max * n_max];
        for i in 0..n {
            for j in 0..n {
                a[i * n_max + j] = g.adjacency()[i * n + j] as f64;
            }
        }
        adjacency.push(Tensor::from_vec(&[n_max, n_max], a).expect("sized above"));

        let mut m = vec![0.0; n_max];
        m[..n].fill(1.0);
        node_mask.push(Tensor::from_vec(&[n_max], m).expect("sized above"));
    }

    Ok(GraphBatch {
        n_max,
        features,
        adjacency,
        node_mask,
        labels: Some(graphs.iter().map(|g| g.label()).collect()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_features, Dataset, FeaturePolicy};

    fn featured(graphs: Vec<Graph>) -> Dataset {
        let n_classes = graphs.iter().map(|g| g.label()).max().unwrap() + 1;
        let originals = (0..n_classes as i64).collect();
        let ds = Dataset::new("t", graphs, n_classes, originals, None).unwrap();
        build_features(&ds, FeaturePolicy::DegreeOnehot { cap: 8 }).unwrap()
    }

    #[test]
    fn pads_to_largest_and_masks_true_sizes() {
        let ds = featured(vec![
            Graph::from_edges(3, &[(0, 1), (1, 2)], 0).unwrap(),
            Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)], 1).unwrap(),
        ]);
        let refs: Vec<&Graph> = ds.graphs().iter().collect();
        let batch = make_batch(&refs, None).unwrap();
        assert_eq!(batch.n_max, 5);
        let sums: Vec<f64> = batch
            .node_mask
            .iter()
            .map(|m| m.values().iter().sum())
            .collect();
        assert_eq!(sums, vec![3.0, 5.0]);
        // Padded feature rows and adjacency rows/columns are exactly zero.
        let f = &batch.features[0];
        assert!(f.values()[3 * ds.feature_dim()..].iter().all(|&v| v == 0.0));
        let a = &batch.adjacency[0];
        for i in 0..5 {
            for j in 3..5 {
                assert_eq!(a.values()[i * 5 + j], 0.0);
                assert_eq!(a.values()[j * 5 + i], 0.0);
            }
        }
    }

    #[test]
    fn exact_fit_is_bit_identical_to_the_graph() {
        let ds = featured(vec![
            Graph::from_edges(4, &[(0, 1), (2, 3)], 0).unwrap(),
            Graph::from_edges(2, &[(0, 1)], 1).unwrap(),
        ]);
        let g = &ds.graphs()[0];
        let batch = make_batch(&[g], Some(4)).unwrap();
        assert_eq!(batch.n_max, 4);
        assert_eq!(batch.features[0].values(), g.features());
        let expected: Vec<f64> = g.adjacency().iter().map(|&v| v as f64).collect();
        assert_eq!(batch.adjacency[0].values(), expected.as_slice());
    }

    #[test]
    fn undersized_pad_request_is_rejected() {
        let ds = featured(vec![
            Graph::from_edges(4, &[(0, 1)], 0).unwrap(),
            Graph::from_edges(2, &[(0, 1)], 1).unwrap(),
        ]);
        let refs: Vec<&Graph> = ds.graphs().iter().collect();
        assert!(matches!(
            make_batch(&refs, Some(3)),
            Err(DataError::PadTooSmall { requested: 3, max: 4 })
        ));
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(matches!(make_batch(&[], None), Err(DataError::EmptyBatch)));
    }
}
