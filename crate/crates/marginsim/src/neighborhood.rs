//! Exact k-nearest-neighbor index and the symmetric pair sets built from it.
//!
//! Neighborhoods are fixed before training ever starts: each sample's k
//! Euclidean-nearest neighbors are split by label into targets (same class)
//! and imposters (different class). Training constraints come from the
//! symmetric closure of those lists, so the pair (i, j) counts whenever
//! either endpoint named the other.

use std::collections::BTreeMap;

use ndarray::ArrayView1;
use rayon::prelude::*;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};

/// Per-sample nearest-neighbor lists, nearest first, self excluded, with the
/// same-label / different-label split precomputed.
#[derive(Debug, Clone)]
pub struct NeighborhoodIndex {
    k: usize,
    neighbors: Vec<Vec<u32>>,
    targets: Vec<Vec<u32>>,
    imposters: Vec<Vec<u32>>,
}

impl NeighborhoodIndex {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Neighbor indices of sample `i`, nearest first.
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i]
    }

    /// Neighbors of `i` sharing its label, nearest first.
    pub fn targets(&self, i: usize) -> &[u32] {
        &self.targets[i]
    }

    /// Neighbors of `i` with a different label, nearest first.
    pub fn imposters(&self, i: usize) -> &[u32] {
        &self.imposters[i]
    }

    /// Rebuilds an index from stored neighbor lists plus the labels of the
    /// dataset they index into.
    pub fn from_neighbor_lists(lists: Vec<Vec<u32>>, labels: &[u32]) -> Result<Self> {
        let n = lists.len();
        if n != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "neighbor lists vs labels",
                expected: labels.len(),
                got: n,
            });
        }
        let k = lists.first().map_or(0, |l| l.len());
        for (i, list) in lists.iter().enumerate() {
            if list.len() != k {
                return Err(Error::InvalidParameter {
                    name: "neighbor lists",
                    reason: format!("row {i} has {} entries, expected {k}", list.len()),
                });
            }
            for &j in list {
                if j as usize >= n {
                    return Err(Error::InvalidParameter {
                        name: "neighbor lists",
                        reason: format!("row {i} names out-of-range sample {j}"),
                    });
                }
                if j as usize == i {
                    return Err(Error::InvalidParameter {
                        name: "neighbor lists",
                        reason: format!("row {i} lists itself as a neighbor"),
                    });
                }
            }
        }
        let (targets, imposters) = split_by_label(&lists, labels);
        Ok(Self {
            k,
            neighbors: lists,
            targets,
            imposters,
        })
    }
}

fn split_by_label(lists: &[Vec<u32>], labels: &[u32]) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    let mut targets = Vec::with_capacity(lists.len());
    let mut imposters = Vec::with_capacity(lists.len());
    for (i, list) in lists.iter().enumerate() {
        let (t, f): (Vec<u32>, Vec<u32>) =
            list.iter().partition(|&&j| labels[j as usize] == labels[i]);
        targets.push(t);
        imposters.push(f);
    }
    (targets, imposters)
}

fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Exact brute-force k-NN over the dataset, ties broken by ascending sample
/// index. `k >= N` is clamped to `N - 1` with a warning.
pub fn build_index(data: &LabeledDataset, k: usize) -> Result<NeighborhoodIndex> {
    let n = data.len();
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: "neighborhood size must be at least 1".to_string(),
        });
    }
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "dataset",
            reason: "need at least 2 samples to build a neighborhood".to_string(),
        });
    }
    let k = if k >= n {
        log::warn!("k={k} >= dataset size {n}; clamping to {}", n - 1);
        n - 1
    } else {
        k
    };

    let neighbors: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = data.feature(i);
            let mut scored: Vec<(f64, u32)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (squared_distance(xi, data.feature(j)), j as u32))
                .collect();
            scored.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            scored.truncate(k);
            scored.into_iter().map(|(_, j)| j).collect()
        })
        .collect();

    let (targets, imposters) = split_by_label(&neighbors, data.labels());
    Ok(NeighborhoodIndex {
        k,
        neighbors,
        targets,
        imposters,
    })
}

/// Symmetric closure of the target and imposter relations: pair (i, j) is
/// included when either sample's neighbor list produced it.
///
/// Samples with an empty side are unusable for triplet generation and are
/// skipped by the trainers.
#[derive(Debug, Clone)]
pub struct SymmetricPairSets {
    target_pairs: Vec<Vec<u32>>,
    imposter_pairs: Vec<Vec<u32>>,
}

impl SymmetricPairSets {
    /// Builds pair sets directly from per-sample lists (for custom
    /// neighborhood schemes). Lists are sorted and deduplicated; a sample
    /// appearing in both of its own lists, or in its own pair set, is
    /// rejected.
    pub fn from_parts(target_pairs: Vec<Vec<u32>>, imposter_pairs: Vec<Vec<u32>>) -> Result<Self> {
        if target_pairs.len() != imposter_pairs.len() {
            return Err(Error::DimensionMismatch {
                context: "pair set lengths",
                expected: target_pairs.len(),
                got: imposter_pairs.len(),
            });
        }
        let mut target_pairs = target_pairs;
        let mut imposter_pairs = imposter_pairs;
        for i in 0..target_pairs.len() {
            target_pairs[i].sort_unstable();
            target_pairs[i].dedup();
            imposter_pairs[i].sort_unstable();
            imposter_pairs[i].dedup();
            if target_pairs[i].binary_search(&(i as u32)).is_ok()
                || imposter_pairs[i].binary_search(&(i as u32)).is_ok()
            {
                return Err(Error::InvalidParameter {
                    name: "pair sets",
                    reason: format!("sample {i} is paired with itself"),
                });
            }
            for j in &target_pairs[i] {
                if imposter_pairs[i].binary_search(j).is_ok() {
                    return Err(Error::InvalidParameter {
                        name: "pair sets",
                        reason: format!("sample {i}: {j} is both target and imposter"),
                    });
                }
            }
        }
        Ok(Self {
            target_pairs,
            imposter_pairs,
        })
    }

    pub fn len(&self) -> usize {
        self.target_pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target_pairs.is_empty()
    }

    /// Same-class pairs of `i`, ascending index.
    pub fn target_pairs(&self, i: usize) -> &[u32] {
        &self.target_pairs[i]
    }

    /// Different-class pairs of `i`, ascending index.
    pub fn imposter_pairs(&self, i: usize) -> &[u32] {
        &self.imposter_pairs[i]
    }

    /// A sample can generate triplets only with both pair sets non-empty.
    pub fn usable(&self, i: usize) -> bool {
        !self.target_pairs[i].is_empty() && !self.imposter_pairs[i].is_empty()
    }

    pub fn usable_indices(&self) -> Vec<u32> {
        (0..self.len() as u32).filter(|&i| self.usable(i as usize)).collect()
    }

    /// Total number of enumerable triplets, sum over samples of
    /// |targets| * |imposters|.
    pub fn triplet_pool_size(&self) -> u64 {
        (0..self.len())
            .map(|i| self.target_pairs[i].len() as u64 * self.imposter_pairs[i].len() as u64)
            .sum()
    }
}

/// Symmetrizes a neighborhood index into training pair sets.
pub fn symmetrize(index: &NeighborhoodIndex) -> SymmetricPairSets {
    let n = index.len();
    let mut target_pairs: Vec<Vec<u32>> = index.targets.clone();
    let mut imposter_pairs: Vec<Vec<u32>> = index.imposters.clone();
    for j in 0..n {
        for &t in index.targets(j) {
            target_pairs[t as usize].push(j as u32);
        }
        for &l in index.imposters(j) {
            imposter_pairs[l as usize].push(j as u32);
        }
    }
    for i in 0..n {
        target_pairs[i].sort_unstable();
        target_pairs[i].dedup();
        imposter_pairs[i].sort_unstable();
        imposter_pairs[i].dedup();
    }
    SymmetricPairSets {
        target_pairs,
        imposter_pairs,
    }
}

/// Per-edge weights of the embedding objective's linear form: every target
/// pair of `i` weighs `-|imposter_pairs(i)|`, every imposter pair weighs
/// `+|target_pairs(i)|`. Exposed so the linear form can be checked against
/// the explicit triplet sum.
pub fn graph_weights(pairs: &SymmetricPairSets) -> BTreeMap<(u32, u32), i64> {
    let mut weights = BTreeMap::new();
    for i in 0..pairs.len() {
        let t = pairs.target_pairs(i);
        let im = pairs.imposter_pairs(i);
        for &j in t {
            weights.insert((i as u32, j), -(im.len() as i64));
        }
        for &l in im {
            weights.insert((i as u32, l), t.len() as i64);
        }
    }
    weights
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn three_points() -> LabeledDataset {
        let features = array![[0.0], [1.0], [10.0]];
        LabeledDataset::new(features, vec![1, 1, 2]).unwrap()
    }

    #[test]
    fn three_point_line_splits_targets_and_imposters() {
        let data = three_points();
        let index = build_index(&data, 1).unwrap();
        assert_eq!(index.neighbors(0), &[1]);
        assert_eq!(index.neighbors(1), &[0]);
        assert_eq!(index.neighbors(2), &[1]);
        assert_eq!(index.targets(0), &[1]);
        assert!(index.imposters(0).is_empty());
        assert_eq!(index.imposters(2), &[1]);
        assert!(index.targets(2).is_empty());
    }

    #[test]
    fn k_at_least_n_clamps_to_all_others() {
        let data = three_points();
        let index = build_index(&data, 5).unwrap();
        assert_eq!(index.k(), 2);
        for i in 0..3 {
            assert_eq!(index.neighbors(i).len(), 2);
        }
    }

    #[test]
    fn duplicate_points_break_ties_by_index() {
        let features = array![[1.0], [1.0], [1.0], [2.0]];
        let data = LabeledDataset::new(features, vec![1, 1, 2, 2]).unwrap();
        let index = build_index(&data, 2).unwrap();
        assert_eq!(index.neighbors(0), &[1, 2]);
        assert_eq!(index.neighbors(1), &[0, 2]);
        assert_eq!(index.neighbors(2), &[0, 1]);
        assert_eq!(index.neighbors(3), &[0, 1]);
    }

    #[test]
    fn k_zero_and_tiny_datasets_rejected() {
        let data = three_points();
        assert!(build_index(&data, 0).is_err());
        let single = LabeledDataset::new(Array2::zeros((1, 2)), vec![1]).unwrap();
        assert!(build_index(&single, 1).is_err());
    }

    #[test]
    fn matches_independent_distance_sort() {
        // Oracle: pick each next-nearest neighbor by a linear scan over the
        // full distance row, ties by lower index.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for (n, d, k) in [(57, 3, 5), (200, 8, 12), (89, 2, 88)] {
            let features = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
            let labels: Vec<u32> = (0..n).map(|_| rng.random_range(1..4)).collect();
            let data = LabeledDataset::new(features, labels).unwrap();
            let index = build_index(&data, k).unwrap();
            for i in 0..n {
                let mut remaining: Vec<u32> =
                    (0..n as u32).filter(|&j| j as usize != i).collect();
                let mut expected = Vec::new();
                for _ in 0..index.k() {
                    let mut best = 0;
                    for (pos, &j) in remaining.iter().enumerate() {
                        let dj = squared_distance(data.feature(i), data.feature(j as usize));
                        let db = squared_distance(
                            data.feature(i),
                            data.feature(remaining[best] as usize),
                        );
                        if dj < db || (dj == db && j < remaining[best]) {
                            best = pos;
                        }
                    }
                    expected.push(remaining.remove(best));
                }
                assert_eq!(index.neighbors(i), expected.as_slice(), "row {i} of n={n}");
            }
        }
    }

    #[test]
    fn symmetrize_three_point_line() {
        let data = three_points();
        let index = build_index(&data, 1).unwrap();
        let pairs = symmetrize(&index);
        assert_eq!(pairs.target_pairs(0), &[1]);
        assert_eq!(pairs.target_pairs(1), &[0]);
        assert!(pairs.target_pairs(2).is_empty());
        assert!(pairs.imposter_pairs(0).is_empty());
        // 2 named 1 as an imposter, so the reverse pair exists for 1.
        assert_eq!(pairs.imposter_pairs(1), &[2]);
        assert_eq!(pairs.imposter_pairs(2), &[1]);
        assert!(pairs.usable(1));
        assert!(!pairs.usable(0));
        assert!(!pairs.usable(2));
        assert_eq!(pairs.usable_indices(), vec![1]);
    }

    #[test]
    fn symmetric_closure_contains_forward_and_reverse_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let features = Array2::from_shape_fn((80, 4), |_| rng.random_range(-1.0..1.0));
        let labels: Vec<u32> = (0..80).map(|_| rng.random_range(1..3)).collect();
        let data = LabeledDataset::new(features, labels).unwrap();
        let index = build_index(&data, 6).unwrap();
        let pairs = symmetrize(&index);
        for i in 0..80 {
            for &j in index.targets(i) {
                assert!(pairs.target_pairs(i).contains(&j));
                assert!(pairs.target_pairs(j as usize).contains(&(i as u32)));
            }
            for &l in index.imposters(i) {
                assert!(pairs.imposter_pairs(i).contains(&l));
                assert!(pairs.imposter_pairs(l as usize).contains(&(i as u32)));
            }
            // Disjoint by construction: labels decide the side.
            for &j in pairs.target_pairs(i) {
                assert!(!pairs.imposter_pairs(i).contains(&j));
            }
        }
    }

    #[test]
    fn graph_weights_count_opposite_side() {
        let pairs = SymmetricPairSets::from_parts(
            vec![vec![1, 2], vec![0], vec![0], vec![], vec![], vec![]],
            vec![vec![3, 4, 5], vec![], vec![], vec![0], vec![0], vec![0]],
        )
        .unwrap();
        let weights = graph_weights(&pairs);
        assert_eq!(weights[&(0, 1)], -3);
        assert_eq!(weights[&(0, 2)], -3);
        assert_eq!(weights[&(0, 3)], 2);
        assert_eq!(weights[&(0, 4)], 2);
        assert_eq!(weights[&(0, 5)], 2);
        // Sample 1 has no imposter pairs: its target edge weighs 0.
        assert_eq!(weights[&(1, 0)], 0);
        // Sample 3 has no target pairs: its imposter edge weighs 0.
        assert_eq!(weights[&(3, 0)], 0);
    }

    #[test]
    fn from_parts_rejects_overlap_and_self_pairs() {
        assert!(SymmetricPairSets::from_parts(vec![vec![1], vec![0]], vec![vec![1], vec![]])
            .is_err());
        assert!(SymmetricPairSets::from_parts(vec![vec![0], vec![]], vec![vec![], vec![]])
            .is_err());
    }

    #[test]
    fn triplet_pool_size_multiplies_pair_counts() {
        let pairs = SymmetricPairSets::from_parts(
            vec![vec![1, 2], vec![0], vec![], vec![]],
            vec![vec![3], vec![2, 3], vec![], vec![]],
        )
        .unwrap();
        assert_eq!(pairs.triplet_pool_size(), 2 + 2);
    }
}
