//! Soft-voting k-NN classification and ranked-retrieval evaluation.
//!
//! A test vector's k_vote Euclidean-nearest training samples vote for their
//! classes, each vote weighted by the learned similarity to the test vector.
//! Negative similarities subtract, classes with no voters are treated as
//! minus infinity, and score ties go to the smaller class id.
//!
//! All classes in this module are expressed as original label ids, not the
//! dense internal ids a [`LabeledDataset`] remaps to, so results from
//! independently loaded training and test sets compare directly.

use ndarray::ArrayView1;
use rayon::prelude::*;

use crate::dataset::LabeledDataset;
use crate::similarity::SimilarityMeasure;

/// Classifier output for one test vector: the winning class plus every
/// voted class with its accumulated score, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Original label id of the winning class.
    pub predicted: u32,
    /// (class, score) sorted by descending score, ties by ascending class.
    pub ranked: Vec<(u32, f64)>,
}

fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Indices of the `k` Euclidean-nearest training rows, nearest first, ties
/// by ascending index.
fn nearest_training(x: ArrayView1<'_, f64>, train: &LabeledDataset, k: usize) -> Vec<u32> {
    let mut scored: Vec<(f64, u32)> = (0..train.len())
        .map(|j| (squared_distance(x, train.feature(j)), j as u32))
        .collect();
    scored.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    scored.truncate(k);
    scored.into_iter().map(|(_, j)| j).collect()
}

fn rank_class_scores(scores: Vec<(u32, f64)>) -> Prediction {
    let mut ranked = scores;
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Prediction {
        predicted: ranked[0].0,
        ranked,
    }
}

/// Soft-voting prediction for one test vector.
pub fn predict<S: SimilarityMeasure>(
    x: ArrayView1<'_, f64>,
    train: &LabeledDataset,
    sim: &S,
    k_vote: usize,
) -> Prediction {
    assert!(
        k_vote >= 1 && k_vote <= train.len(),
        "predict: k_vote must be in 1..={}, got {k_vote}",
        train.len()
    );
    assert_eq!(
        x.len(),
        train.dim(),
        "predict: test vector length {} does not match training dim {}",
        x.len(),
        train.dim()
    );
    let voters = nearest_training(x, train, k_vote);
    let mut scores: Vec<(u32, f64)> = Vec::new();
    for &j in &voters {
        let class = train.original_label(train.label(j as usize));
        let s = sim.score(x, train.feature(j as usize));
        match scores.iter_mut().find(|(c, _)| *c == class) {
            Some((_, total)) => *total += s,
            None => scores.push((class, s)),
        }
    }
    rank_class_scores(scores)
}

/// [`predict`] over every row of a test set, in parallel.
pub fn predict_all<S: SimilarityMeasure>(
    test: &LabeledDataset,
    train: &LabeledDataset,
    sim: &S,
    k_vote: usize,
) -> Vec<Prediction> {
    (0..test.len())
        .into_par_iter()
        .map(|i| predict(test.feature(i), train, sim, k_vote))
        .collect()
}

/// Plain majority-vote k-NN under Euclidean distance; vote-count ties go to
/// the smaller class id. The scores in the result are the vote counts.
pub fn euclidean_knn_baseline(
    test: &LabeledDataset,
    train: &LabeledDataset,
    k_vote: usize,
) -> Vec<Prediction> {
    assert!(
        k_vote >= 1 && k_vote <= train.len(),
        "baseline: k_vote must be in 1..={}, got {k_vote}",
        train.len()
    );
    (0..test.len())
        .into_par_iter()
        .map(|i| {
            let voters = nearest_training(test.feature(i), train, k_vote);
            let mut scores: Vec<(u32, f64)> = Vec::new();
            for &j in &voters {
                let class = train.original_label(train.label(j as usize));
                match scores.iter_mut().find(|(c, _)| *c == class) {
                    Some((_, count)) => *count += 1.0,
                    None => scores.push((class, 1.0)),
                }
            }
            rank_class_scores(scores)
        })
        .collect()
}

/// Fraction of predictions whose true class appears among the top `n`
/// ranked classes. `truth` carries original label ids.
pub fn top_n_accuracy(predictions: &[Prediction], truth: &[u32], n: usize) -> f64 {
    assert!(n >= 1, "top_n_accuracy: n must be at least 1");
    assert_eq!(
        predictions.len(),
        truth.len(),
        "top_n_accuracy: {} predictions vs {} labels",
        predictions.len(),
        truth.len()
    );
    if predictions.is_empty() {
        return 0.0;
    }
    let hits = predictions
        .iter()
        .zip(truth.iter())
        .filter(|(p, &y)| p.ranked.iter().take(n).any(|&(c, _)| c == y))
        .count();
    hits as f64 / predictions.len() as f64
}

/// One operating point of a precision-recall sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub cutoff: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Precision-recall curve over neighbor-rank cutoffs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

/// Sweeps cutoffs r = 1..=max_rank. Each test sample's candidate pool is
/// its k_vote Euclidean-nearest training rows, re-ranked by the learned
/// similarity (ties by ascending index). Precision at r averages the
/// same-class fraction of each pool's top r; recall averages the fraction
/// of each pool's same-class candidates captured. Samples whose pool holds
/// no same-class candidate are excluded from both averages. Cutoffs past
/// the pool size use the whole pool.
pub fn precision_recall<S: SimilarityMeasure>(
    test: &LabeledDataset,
    train: &LabeledDataset,
    sim: &S,
    k_vote: usize,
    max_rank: usize,
) -> PrCurve {
    assert!(
        max_rank >= 1 && max_rank <= train.len(),
        "precision_recall: max_rank must be in 1..={}, got {max_rank}",
        train.len()
    );
    assert!(
        k_vote >= 1 && k_vote <= train.len(),
        "precision_recall: k_vote must be in 1..={}, got {k_vote}",
        train.len()
    );

    // Per sample: candidate labels ordered by descending learned similarity.
    let ranked_matches: Vec<Option<Vec<bool>>> = (0..test.len())
        .into_par_iter()
        .map(|i| {
            let x = test.feature(i);
            let pool = nearest_training(x, train, k_vote);
            let mut scored: Vec<(f64, u32)> = pool
                .iter()
                .map(|&j| (sim.score(x, train.feature(j as usize)), j))
                .collect();
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let truth = test.original_label(test.label(i));
            let matches: Vec<bool> = scored
                .iter()
                .map(|&(_, j)| train.original_label(train.label(j as usize)) == truth)
                .collect();
            if matches.iter().any(|&m| m) {
                Some(matches)
            } else {
                None
            }
        })
        .collect();

    let included: Vec<&Vec<bool>> = ranked_matches.iter().flatten().collect();
    let mut points = Vec::with_capacity(max_rank);
    for r in 1..=max_rank {
        let mut precision = 0.0;
        let mut recall = 0.0;
        for matches in &included {
            let depth = r.min(matches.len());
            let hits = matches[..depth].iter().filter(|&&m| m).count() as f64;
            let relevant = matches.iter().filter(|&&m| m).count() as f64;
            precision += hits / depth as f64;
            recall += hits / relevant;
        }
        let denom = included.len().max(1) as f64;
        points.push(PrPoint {
            cutoff: r,
            precision: precision / denom,
            recall: recall / denom,
        });
    }
    PrCurve { points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::{EnsembleMember, EnsembleModel, SimilarityModel};
    use crate::synth::two_class_gaussians;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Training rows are one-hot, so with the identity model the test
    /// vector's coordinates are exactly the voter similarities.
    fn one_hot_train(labels: Vec<u32>) -> LabeledDataset {
        let n = labels.len();
        LabeledDataset::new(Array2::eye(n), labels).unwrap()
    }

    #[test]
    fn votes_accumulate_per_class() {
        let train = one_hot_train(vec![1, 1, 2]);
        let model = SimilarityModel::identity(3);
        let x = array![0.2, 0.3, 0.6];
        let p = predict(x.view(), &train, &model, 3);
        // Class 1 collects 0.5, class 2 collects 0.6.
        assert_eq!(p.predicted, 2);
        assert_eq!(p.ranked[0].0, 2);
        assert_abs_diff_eq!(p.ranked[0].1, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(p.ranked[1].1, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn unanimous_neighborhood_wins_outright() {
        let train = one_hot_train(vec![3, 3, 3, 8]);
        let model = SimilarityModel::identity(4);
        // Nearest three rows all carry class 3; the result speaks the
        // original id even though it is internally remapped.
        let x = array![0.9, 0.8, 0.7, 0.0];
        let p = predict(x.view(), &train, &model, 3);
        assert_eq!(p.predicted, 3);
        assert_eq!(p.ranked.len(), 1);
    }

    #[test]
    fn negative_similarities_subtract_from_the_class_score() {
        let train = one_hot_train(vec![1, 1, 2]);
        let model = SimilarityModel::identity(3);
        let x = array![-0.5, 0.4, 0.3];
        let p = predict(x.view(), &train, &model, 3);
        // Class 1 nets -0.1 despite two voters; class 2 scores 0.3.
        assert_eq!(p.predicted, 2);
    }

    #[test]
    fn classes_survive_independent_remapping() {
        // Train labels {4, 9} remap internally to {1, 2}; a test set seen
        // only with label 9 would remap it to 1. Predictions must still
        // line up with the test set's own original labels.
        let train = one_hot_train(vec![4, 9]);
        let model = SimilarityModel::identity(2);
        let test = LabeledDataset::new(array![[0.1, 1.0]], vec![9]).unwrap();
        let preds = predict_all(&test, &train, &model, 2);
        assert_eq!(preds[0].predicted, 9);
        assert_eq!(top_n_accuracy(&preds, &test.original_labels(), 1), 1.0);
    }

    #[test]
    fn score_ties_go_to_the_smaller_class_id() {
        let train = one_hot_train(vec![2, 1]);
        let model = SimilarityModel::identity(2);
        let x = array![0.3, 0.3];
        let p = predict(x.view(), &train, &model, 2);
        assert_eq!(p.predicted, 1);
    }

    #[test]
    #[should_panic(expected = "k_vote must be in")]
    fn k_vote_larger_than_training_set_panics() {
        let train = one_hot_train(vec![1, 2]);
        let model = SimilarityModel::identity(2);
        predict(array![1.0, 0.0].view(), &train, &model, 3);
    }

    #[test]
    fn identity_model_votes_with_cosines_on_unit_vectors() {
        let data = two_class_gaussians(15, 4, 3.0, 1.0, 31).unwrap();
        let mut features = data.features().clone();
        crate::dataset::normalize_rows_in_place(&mut features);
        let train = LabeledDataset::new(features, data.labels().to_vec()).unwrap();
        let model = SimilarityModel::identity(4);
        let x = train.feature(0).to_owned();
        let p = predict(x.view(), &train, &model, 5);
        // Recompute the expected winner with plain dot products.
        let voters = nearest_training(x.view(), &train, 5);
        let mut best: Option<(u32, f64)> = None;
        let mut sums: Vec<(u32, f64)> = Vec::new();
        for &j in &voters {
            let c = train.original_label(train.label(j as usize));
            let s = x.dot(&train.feature(j as usize));
            match sums.iter_mut().find(|(cc, _)| *cc == c) {
                Some((_, t)) => *t += s,
                None => sums.push((c, s)),
            }
        }
        for &(c, s) in &sums {
            if best.map_or(true, |(bc, bs)| s > bs || (s == bs && c < bc)) {
                best = Some((c, s));
            }
        }
        assert_eq!(p.predicted, best.unwrap().0);
    }

    #[test]
    fn top_n_counts_hits_at_each_depth() {
        let mk = |ranked: Vec<(u32, f64)>| Prediction {
            predicted: ranked[0].0,
            ranked,
        };
        // Truth always ranked second.
        let preds = vec![
            mk(vec![(2, 0.9), (1, 0.5)]),
            mk(vec![(3, 0.7), (1, 0.6)]),
        ];
        let truth = vec![1, 1];
        assert_eq!(top_n_accuracy(&preds, &truth, 1), 0.0);
        assert_eq!(top_n_accuracy(&preds, &truth, 3), 1.0);

        // All correct at the top.
        let preds = vec![mk(vec![(1, 1.0)]), mk(vec![(2, 1.0), (1, 0.2)])];
        assert_eq!(top_n_accuracy(&preds, &[1, 2], 1), 1.0);
    }

    #[test]
    fn top_n_on_a_mixed_batch_matches_hand_ranking() {
        // Oracle: count hits by scanning each ranked list independently.
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let mut preds = Vec::new();
        let mut truth = Vec::new();
        for _ in 0..10 {
            let mut ranked: Vec<(u32, f64)> = (1..=4)
                .map(|c| (c, rng.random_range(-1.0..1.0_f64)))
                .collect();
            ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            preds.push(Prediction {
                predicted: ranked[0].0,
                ranked,
            });
            truth.push(rng.random_range(1..=4_u32));
        }
        for n in 1..=4 {
            let mut hits = 0;
            for (p, &y) in preds.iter().zip(truth.iter()) {
                let mut found = false;
                for d in 0..n.min(p.ranked.len()) {
                    if p.ranked[d].0 == y {
                        found = true;
                    }
                }
                if found {
                    hits += 1;
                }
            }
            let expected = hits as f64 / 10.0;
            assert_abs_diff_eq!(top_n_accuracy(&preds, &truth, n), expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn baseline_majority_vote_and_tie_break() {
        let train = LabeledDataset::new(
            array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]],
            vec![2, 2, 1, 1],
        )
        .unwrap();
        let test =
            LabeledDataset::new(array![[0.1, 0.1], [0.6, 0.4]], vec![1, 1]).unwrap();
        // k=3 nearest of (0.1,0.1): rows 0,1,2 -> two votes class 2, one
        // vote class 1 -> class 2.
        let preds = euclidean_knn_baseline(&test, &train, 3);
        assert_eq!(preds[0].predicted, 2);
        // k=2 nearest of (0.6,0.4): rows 0 and 1... both class 2; force a
        // tie instead with k=4: two votes each -> smaller class id wins.
        let tied = euclidean_knn_baseline(&test, &train, 4);
        assert_eq!(tied[1].predicted, 1);
        assert_eq!(tied[1].ranked[0].1, 2.0);
        assert_eq!(tied[1].ranked[1].1, 2.0);
    }

    #[test]
    fn positive_rescaling_of_the_model_keeps_predictions() {
        let data = two_class_gaussians(25, 3, 2.0, 1.0, 77).unwrap();
        let test = two_class_gaussians(10, 3, 2.0, 1.0, 78).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let m = Array2::from_shape_fn((3, 3), |_| rng.random_range(-1.0..1.0_f64));
        let model = SimilarityModel::from_matrix(m.clone()).unwrap();
        let scaled = SimilarityModel::from_matrix(m * 3.0).unwrap();
        let a = predict_all(&test, &data, &model, 7);
        let b = predict_all(&test, &data, &scaled, 7);
        for (pa, pb) in a.iter().zip(b.iter()) {
            assert_eq!(pa.predicted, pb.predicted);
        }
    }

    #[test]
    fn ensemble_and_collapsed_model_predict_identically() {
        let train = two_class_gaussians(30, 6, 2.5, 1.0, 91).unwrap();
        let test = two_class_gaussians(12, 6, 2.5, 1.0, 92).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(93);
        let members = (0..3)
            .map(|_| EnsembleMember {
                projection: Array2::from_shape_fn((2, 6), |_| rng.random_range(-1.0..1.0_f64)),
                model: SimilarityModel::from_matrix(Array2::from_shape_fn((2, 2), |_| {
                    rng.random_range(-1.0..1.0_f64)
                }))
                .unwrap(),
            })
            .collect();
        let ens = EnsembleModel::from_members(members).unwrap();
        let collapsed = ens.collapse();
        let a = predict_all(&test, &train, &ens, 9);
        let b = predict_all(&test, &train, &collapsed, 9);
        for (pa, pb) in a.iter().zip(b.iter()) {
            assert_eq!(pa.predicted, pb.predicted);
        }
    }

    #[test]
    fn perfect_ranking_gives_unit_precision_until_the_pool_ends() {
        // All same-class candidates more similar than any imposter.
        let train = LabeledDataset::new(
            array![[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9]],
            vec![1, 1, 2, 2],
        )
        .unwrap();
        let test = LabeledDataset::new(array![[1.0, 0.05]], vec![1]).unwrap();
        let model = SimilarityModel::identity(2);
        let curve = precision_recall(&test, &train, &model, 4, 4);
        // Pool has 2 relevant of 4; relevant ones rank first.
        assert_abs_diff_eq!(curve.points[0].precision, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(curve.points[1].precision, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(curve.points[1].recall, 1.0, epsilon = 1e-12);
        // Past the relevant set, precision decays, recall stays 1.
        assert_abs_diff_eq!(curve.points[3].precision, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(curve.points[3].recall, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn adversarial_ranking_zeroes_early_precision() {
        // Imposters strictly more similar than the lone same-class row.
        let train = LabeledDataset::new(
            array![[0.2, 0.8], [0.9, 0.1], [0.8, 0.2]],
            vec![1, 2, 2],
        )
        .unwrap();
        let test = LabeledDataset::new(array![[1.0, 0.0]], vec![1]).unwrap();
        let model = SimilarityModel::identity(2);
        let curve = precision_recall(&test, &train, &model, 3, 3);
        assert_eq!(curve.points[0].precision, 0.0);
        assert_eq!(curve.points[0].recall, 0.0);
        // The relevant row finally shows up at the last cutoff.
        assert_abs_diff_eq!(curve.points[2].recall, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn samples_without_relevant_candidates_are_excluded() {
        // Second test row's class has no training presence in its pool.
        let train = LabeledDataset::new(
            array![[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]],
            vec![1, 1, 2],
        )
        .unwrap();
        let test = LabeledDataset::new(array![[1.0, 0.0], [0.0, 0.9]], vec![1, 3]).unwrap();
        let model = SimilarityModel::identity(2);
        let curve = precision_recall(&test, &train, &model, 2, 2);
        // Only the first sample counts; its top-2 pool is all class 1.
        assert_abs_diff_eq!(curve.points[1].precision, 1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn recall_never_decreases_along_the_sweep(seed in 0u64..100) {
            let train = two_class_gaussians(20, 3, 1.5, 1.0, seed).unwrap();
            let test = two_class_gaussians(6, 3, 1.5, 1.0, seed + 1000).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 2000);
            let m = Array2::from_shape_fn((3, 3), |_| rng.random_range(-1.0..1.0_f64));
            let model = SimilarityModel::from_matrix(m).unwrap();
            let curve = precision_recall(&test, &train, &model, 8, 12);
            for w in curve.points.windows(2) {
                prop_assert!(w[1].recall >= w[0].recall - 1e-12);
            }
            for p in &curve.points {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&p.precision));
                prop_assert!((0.0..=1.0 + 1e-12).contains(&p.recall));
            }
        }
    }
}
