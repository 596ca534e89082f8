//! Seeded stratified k-fold plans.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Dataset};

/// A disjoint partition of graph indices into k folds.
#[derive(Clone, Debug)]
pub struct FoldPlan {
    folds: Vec<Vec<usize>>,
    pub seed: u64,
    /// Set when some class has fewer members than folds and stratification
    /// degraded to best effort.
    pub best_effort: bool,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Validation indices of fold `i`.
    pub fn fold(&self, i: usize) -> &[usize] {
        &self.folds[i]
    }

    /// Training indices of fold `i` (everything outside the fold), in
    /// ascending order.
    pub fn train_indices(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

/// Splits the dataset into `k` stratified folds, deterministically for a
/// fixed seed: per-class index lists are shuffled, then dealt round-robin
/// with the dealing position carried across classes so fold sizes stay
/// within one graph of each other.
pub fn stratified_kfold(ds: &Dataset, k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    if k == 0 || k > ds.len() {
        return Err(DataError::TooFewGraphs { k, n: ds.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes()];
    for (idx, g) in ds.graphs().iter().enumerate() {
        by_class[g.label()].push(idx);
    }
    let best_effort = by_class.iter().any(|c| c.len() < k);

    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut next = 0usize;
    for class in &mut by_class {
        class.shuffle(&mut rng);
        for &idx in class.iter() {
            folds[next % k].push(idx);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan {
        folds,
        seed,
        best_effort,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Graph;

    fn dataset(per_class: &[usize]) -> Dataset {
        let mut graphs = Vec::new();
        for (label, &count) in per_class.iter().enumerate() {
            for _ in 0..count {
                graphs.push(Graph::from_edges(3, &[(0, 1), (1, 2)], label).unwrap());
            }
        }
        let originals = (0..per_class.len() as i64).collect();
        Dataset::new("t", graphs, per_class.len(), originals, None).unwrap()
    }

    fn class_histogram(ds: &Dataset, indices: &[usize]) -> Vec<usize> {
        let mut h = vec![0usize; ds.num_classes()];
        for &i in indices {
            h[ds.graphs()[i].label()] += 1;
        }
        h
    }

    #[test]
    fn ten_folds_over_balanced_twenty_put_one_of_each_class_per_fold() {
        let ds = dataset(&[10, 10]);
        let plan = stratified_kfold(&ds, 10, 7).unwrap();
        for i in 0..10 {
            assert_eq!(class_histogram(&ds, plan.fold(i)), vec![1, 1]);
        }
        assert!(!plan.best_effort);
    }

    #[test]
    fn folds_partition_all_indices_exactly() {
        let ds = dataset(&[13, 7, 5]);
        let plan = stratified_kfold(&ds, 4, 3).unwrap();
        let mut seen = vec![false; ds.len()];
        for i in 0..plan.k() {
            for &idx in plan.fold(i) {
                assert!(!seen[idx], "index {idx} appears twice");
                seen[idx] = true;
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn per_fold_class_counts_stay_within_one_of_even_share() {
        let ds = dataset(&[33, 17]);
        let plan = stratified_kfold(&ds, 10, 11).unwrap();
        for class in 0..2 {
            let total = ds.class_counts()[class];
            let lo = total / 10;
            let hi = lo + usize::from(total % 10 != 0);
            for i in 0..10 {
                let got = class_histogram(&ds, plan.fold(i))[class];
                assert!(got == lo || got == hi, "class {class} fold {i}: {got}");
            }
        }
    }

    #[test]
    fn same_seed_reproduces_the_plan() {
        let ds = dataset(&[12, 8]);
        let a = stratified_kfold(&ds, 5, 42).unwrap();
        let b = stratified_kfold(&ds, 5, 42).unwrap();
        for i in 0..5 {
            assert_eq!(a.fold(i), b.fold(i));
        }
    }

    #[test]
    fn undersized_class_flags_best_effort() {
        let ds = dataset(&[12, 3]);
        let plan = stratified_kfold(&ds, 5, 1).unwrap();
        assert!(plan.best_effort);
    }

    #[test]
    fn too_many_folds_is_an_error() {
        let ds = dataset(&[2, 2]);
        assert!(matches!(
            stratified_kfold(&ds, 5, 0),
            Err(DataError::TooFewGraphs { .. })
        ));
    }

    #[test]
    fn train_indices_complement_the_fold() {
        let ds = dataset(&[6, 6]);
        let plan = stratified_kfold(&ds, 3, 9).unwrap();
        let train = plan.train_indices(0);
        for idx in plan.fold(0) {
            assert!(!train.contains(idx));
        }
        assert_eq!(train.len() + plan.fold(0).len(), ds.len());
    }
}
