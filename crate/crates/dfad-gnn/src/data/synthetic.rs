//! Deterministic synthetic datasets.
//!
//! `rings_vs_stars` is the small smoke-test set: the two classes differ in
//! their degree distributions (rings are 2-regular, stars are a hub plus
//! leaves), so degree one-hot features separate them perfectly under any of
//! the model families.
//!
//! `mutag_analog` is a molecule-style stand-in for the MUTAG benchmark that
//! reproduces its published summary statistics exactly: 188 graphs, 2
//! classes (125 positive / 63 negative, original labels {1, -1}), 3371 nodes
//! in total (average 17.93), and 7 node-label types. Positive graphs carry a
//! nitro-like motif (an N-labeled node bonded to two O-labeled leaves);
//! negative graphs never do, but they do contain amine N and lone O
//! decorations, so the classes are not separable from label histograms
//! alone — the classifier has to look at the wiring.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Graph};

// Node-label vocabulary for the molecule-style generator.
const CARBON: i64 = 0;
const NITROGEN: i64 = 1;
const OXYGEN: i64 = 2;
const HALOGENS: [i64; 4] = [3, 4, 5, 6];

/// Rings (class 0) versus stars (class 1), `per_class` graphs each, order
/// shuffled by `seed`. Features are left unbuilt; apply the degree one-hot
/// policy before training.
pub fn rings_vs_stars(per_class: usize, seed: u64) -> Dataset {
    let mut graphs = Vec::with_capacity(2 * per_class);
    for i in 0..per_class {
        let n = 3 + (i % 3); // ring sizes 3, 4, 5
        let edges: Vec<(usize, usize)> = (0..n).map(|v| (v, (v + 1) % n)).collect();
        graphs.push(Graph::from_edges(n, &edges, 0).expect("ring"));
    }
    for i in 0..per_class {
        let n = 5 + (i % 3); // star sizes 5, 6, 7
        let edges: Vec<(usize, usize)> = (1..n).map(|v| (0, v)).collect();
        graphs.push(Graph::from_edges(n, &edges, 1).expect("star"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    graphs.shuffle(&mut rng);
    Dataset::new("RINGS-VS-STARS", graphs, 2, vec![0, 1], None).expect("valid by construction")
}

struct MoleculeBuilder {
    labels: Vec<i64>,
    edges: Vec<(usize, usize)>,
    /// Number of O neighbors already attached per node (nitro guard).
    oxygen_neighbors: Vec<usize>,
}

impl MoleculeBuilder {
    fn ring(rng: &mut ChaCha8Rng) -> Self {
        let len = if rng.gen_bool(0.5) { 5 } else { 6 };
        let mut b = MoleculeBuilder {
            labels: vec![CARBON; len],
            edges: (0..len).map(|v| (v, (v + 1) % len)).collect(),
            oxygen_neighbors: vec![0; len],
        };
        b.oxygen_neighbors.resize(len, 0);
        b
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn add_node(&mut self, label: i64, attach_to: usize) -> usize {
        let id = self.labels.len();
        self.labels.push(label);
        self.oxygen_neighbors.push(0);
        self.edges.push((attach_to, id));
        if label == OXYGEN {
            self.oxygen_neighbors[attach_to] += 1;
        }
        id
    }

    fn random_carbon(&self, rng: &mut ChaCha8Rng) -> usize {
        let carbons: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == CARBON).collect();
        carbons[rng.gen_range(0..carbons.len())]
    }

    /// N bonded to two O leaves, hung off a carbon. Only positive graphs
    /// call this.
    fn add_nitro(&mut self, rng: &mut ChaCha8Rng) {
        let site = self.random_carbon(rng);
        let n = self.add_node(NITROGEN, site);
        self.add_node(OXYGEN, n);
        self.add_node(OXYGEN, n);
    }

    /// Non-motif decoration: amine N (at most one O), lone O, or a halogen.
    /// Returns how many nodes were added.
    fn add_distractor(&mut self, rng: &mut ChaCha8Rng, budget: usize) -> usize {
        let site = self.random_carbon(rng);
        match rng.gen_range(0..4) {
            0 if budget >= 2 => {
                let n = self.add_node(NITROGEN, site);
                if rng.gen_bool(0.5) && budget >= 2 {
                    self.add_node(OXYGEN, n);
                    2
                } else {
                    1
                }
            }
            1 => {
                self.add_node(OXYGEN, site);
                1
            }
            2 => {
                let h = HALOGENS[rng.gen_range(0..HALOGENS.len())];
                self.add_node(h, site);
                1
            }
            _ => {
                self.add_node(CARBON, site);
                1
            }
        }
    }

    /// Grows carbon chains until the target size is reached, occasionally
    /// closing an extra ring edge between carbons.
    fn fill_carbons(&mut self, rng: &mut ChaCha8Rng, target: usize) {
        while self.len() < target {
            let site = self.random_carbon(rng);
            let c = self.add_node(CARBON, site);
            if rng.gen_bool(0.2) {
                let other = self.random_carbon(rng);
                if other != c && other != site && !self.edges.contains(&(other, c)) {
                    self.edges.push((c, other));
                }
            }
        }
    }

    fn build(self, label: usize) -> (Graph, Vec<i64>) {
        let graph = Graph::from_edges(self.len(), &self.edges, label).expect("molecule");
        (graph, self.labels)
    }
}

/// True when the graph contains an N-labeled node with at least two O-labeled
/// neighbors — the motif that defines the positive class.
pub fn has_nitro_motif(graph: &Graph, node_labels: &[i64]) -> bool {
    let n = graph.node_count();
    (0..n).any(|i| {
        node_labels[i] == NITROGEN
            && (0..n)
                .filter(|&j| graph.has_edge(i, j) && node_labels[j] == OXYGEN)
                .count()
                >= 2
    })
}

/// The MUTAG-statistics stand-in: deterministic, self-contained, and exactly
/// matched to the published dataset summary (188 graphs, 2 classes, average
/// graph size 17.93).
pub fn mutag_analog() -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4d55_5441_47);
    let total_graphs = 188;
    let positives = 125;
    let total_nodes = 3371; // 3371 / 188 = 17.9308...

    let mut class_of: Vec<usize> = (0..total_graphs).map(|i| usize::from(i < positives)).collect();
    class_of.shuffle(&mut rng);

    // Draw sizes, then repair to hit the node total exactly.
    let mut sizes: Vec<usize> = (0..total_graphs).map(|_| rng.gen_range(12..=24)).collect();
    loop {
        let sum: usize = sizes.iter().sum();
        if sum == total_nodes {
            break;
        }
        let idx = rng.gen_range(0..sizes.len());
        if sum > total_nodes && sizes[idx] > 10 {
            sizes[idx] -= 1;
        } else if sum < total_nodes && sizes[idx] < 28 {
            sizes[idx] += 1;
        }
    }

    let mut graphs = Vec::with_capacity(total_graphs);
    let mut node_labels = Vec::with_capacity(total_graphs);
    for (&class, &size) in class_of.iter().zip(&sizes) {
        let mut b = MoleculeBuilder::ring(&mut rng);
        if class == 1 {
            b.add_nitro(&mut rng);
            if size >= b.len() + 6 && rng.gen_bool(0.35) {
                b.add_nitro(&mut rng);
            }
        }
        // Both classes receive decorations so label histograms overlap.
        let n_decor = rng.gen_range(1..=3);
        for _ in 0..n_decor {
            let budget = size.saturating_sub(b.len());
            if budget >= 2 {
                b.add_distractor(&mut rng, budget);
            }
        }
        b.fill_carbons(&mut rng, size);
        let (graph, labels) = b.build(class);
        debug_assert_eq!(has_nitro_motif(&graph, &labels), class == 1);
        graphs.push(graph);
        node_labels.push(labels);
    }

    Dataset::new("MUTAG", graphs, 2, vec![-1, 1], Some(node_labels))
        .expect("valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_features, FeaturePolicy};

    #[test]
    fn rings_vs_stars_is_degree_separable() {
        let ds = rings_vs_stars(10, 7);
        assert_eq!(ds.len(), 20);
        assert_eq!(ds.class_counts(), vec![10, 10]);
        for g in ds.graphs() {
            let degs = g.degrees();
            if g.label() == 0 {
                assert!(degs.iter().all(|&d| d == 2), "rings are 2-regular");
            } else {
                assert!(degs.iter().filter(|&&d| d > 2).count() == 1, "one hub");
            }
        }
    }

    #[test]
    fn mutag_analog_matches_published_statistics() {
        let ds = mutag_analog();
        assert_eq!(ds.len(), 188);
        assert_eq!(ds.num_classes(), 2);
        assert!((ds.avg_nodes() - 17.93).abs() < 0.01);
        assert_eq!(ds.class_counts(), vec![63, 125]);
        assert_eq!(ds.original_labels(), &[-1, 1]);
    }

    #[test]
    fn mutag_analog_motif_defines_the_class() {
        let ds = mutag_analog();
        let node_labels = ds.node_labels().unwrap();
        for (g, labels) in ds.graphs().iter().zip(node_labels) {
            assert_eq!(has_nitro_motif(g, labels), g.label() == 1);
        }
    }

    #[test]
    fn mutag_analog_label_histograms_overlap_between_classes() {
        // At least one negative graph contains both N and O, so a node-label
        // histogram alone cannot decide the class.
        let ds = mutag_analog();
        let node_labels = ds.node_labels().unwrap();
        let overlap = ds
            .graphs()
            .iter()
            .zip(node_labels)
            .any(|(g, labels)| {
                g.label() == 0 && labels.contains(&NITROGEN) && labels.contains(&OXYGEN)
            });
        assert!(overlap);
    }

    #[test]
    fn mutag_analog_is_deterministic() {
        let a = mutag_analog();
        let b = mutag_analog();
        for (ga, gb) in a.graphs().iter().zip(b.graphs()) {
            assert_eq!(ga.adjacency(), gb.adjacency());
            assert_eq!(ga.label(), gb.label());
        }
    }

    #[test]
    fn analog_features_build_with_seven_label_types() {
        let ds = build_features(&mutag_analog(), FeaturePolicy::NodeLabelOnehot).unwrap();
        assert_eq!(ds.feature_dim(), 7);
    }
}
