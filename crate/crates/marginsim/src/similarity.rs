//! Bilinear similarity models, the ensemble variant, and the hinge objective.
//!
//! A similarity model scores a pair as s(x, z) = x' M z with a square
//! parameter matrix M. An ensemble holds per-subspace projections P_n and
//! per-subspace models M_n; its score is the sum of member scores, which
//! algebraically equals a single bilinear model with matrix
//! sum_n P_n' M_n P_n (see [`EnsembleModel::collapse`]).

use ndarray::{Array1, Array2, ArrayView1};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::neighborhood::SymmetricPairSets;

/// Anything that can score a pair of equal-length vectors.
pub trait SimilarityMeasure: Sync {
    /// Dimensionality of the vectors the measure accepts.
    fn ambient_dim(&self) -> usize;
    fn score(&self, x: ArrayView1<'_, f64>, z: ArrayView1<'_, f64>) -> f64;
}

/// Square bilinear similarity s(x, z) = x' M z.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityModel {
    matrix: Array2<f64>,
    /// Frobenius norm maintained when renormalization is enabled; set to
    /// the identity's norm sqrt(D).
    pub frob_target: f64,
}

impl SimilarityModel {
    /// Identity-initialized model: on unit vectors it starts as cosine
    /// similarity.
    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: Array2::eye(dim),
            frob_target: (dim as f64).sqrt(),
        }
    }

    pub fn from_matrix(matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                context: "similarity matrix must be square",
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let dim = matrix.nrows();
        Ok(Self {
            matrix,
            frob_target: (dim as f64).sqrt(),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut Array2<f64> {
        &mut self.matrix
    }

    /// s(x, z) = x' M z.
    pub fn similarity(&self, x: ArrayView1<'_, f64>, z: ArrayView1<'_, f64>) -> f64 {
        assert_eq!(
            x.len(),
            self.dim(),
            "similarity: left vector length {} does not match model dim {}",
            x.len(),
            self.dim()
        );
        assert_eq!(
            z.len(),
            self.dim(),
            "similarity: right vector length {} does not match model dim {}",
            z.len(),
            self.dim()
        );
        self.matrix.dot(&z).dot(&x)
    }

    /// M' x, so that s(x, z) = left_vector(x) . z. Lets a scan over many
    /// right-hand candidates pay the matrix product once.
    pub(crate) fn left_vector(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.matrix.t().dot(&x)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rescales M so its Frobenius norm equals `frob_target`. A zero matrix
    /// is left untouched.
    pub fn renormalize(&mut self) {
        let norm = self.frobenius_norm();
        if norm > 0.0 {
            let scale = self.frob_target / norm;
            self.matrix.mapv_inplace(|v| v * scale);
        }
    }

    /// M <- (M + M') / 2.
    pub fn symmetrize(&mut self) {
        let t = self.matrix.t().to_owned();
        self.matrix += &t;
        self.matrix.mapv_inplace(|v| v * 0.5);
    }
}

impl SimilarityMeasure for SimilarityModel {
    fn ambient_dim(&self) -> usize {
        self.dim()
    }

    fn score(&self, x: ArrayView1<'_, f64>, z: ArrayView1<'_, f64>) -> f64 {
        self.similarity(x, z)
    }
}

/// One subspace of an ensemble: a d x D projection and a d x d model.
#[derive(Debug, Clone)]
pub struct EnsembleMember {
    pub projection: Array2<f64>,
    pub model: SimilarityModel,
}

/// Additive ensemble of subspace similarity models.
#[derive(Debug, Clone)]
pub struct EnsembleModel {
    members: Vec<EnsembleMember>,
}

impl EnsembleModel {
    /// All members must share the projection shape, and each model must
    /// match its projection's row count.
    pub fn from_members(members: Vec<EnsembleMember>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidParameter {
                name: "members",
                reason: "an ensemble needs at least one member".to_string(),
            });
        }
        let d = members[0].projection.nrows();
        let ambient = members[0].projection.ncols();
        for (n, member) in members.iter().enumerate() {
            if member.projection.nrows() != d || member.projection.ncols() != ambient {
                return Err(Error::InvalidParameter {
                    name: "members",
                    reason: format!(
                        "member {n} projection is {}x{}, expected {d}x{ambient}",
                        member.projection.nrows(),
                        member.projection.ncols()
                    ),
                });
            }
            if member.model.dim() != d {
                return Err(Error::InvalidParameter {
                    name: "members",
                    reason: format!(
                        "member {n} model dim {} does not match subspace dim {d}",
                        member.model.dim()
                    ),
                });
            }
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }

    pub(crate) fn member_mut(&mut self, n: usize) -> &mut EnsembleMember {
        &mut self.members[n]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn subspace_dim(&self) -> usize {
        self.members[0].projection.nrows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.members[0].projection.ncols()
    }

    /// Sum of member scores sum_n (P_n x)' M_n (P_n z).
    pub fn similarity(&self, x: ArrayView1<'_, f64>, z: ArrayView1<'_, f64>) -> f64 {
        assert_eq!(
            x.len(),
            self.ambient_dim(),
            "ensemble similarity: vector length {} does not match ambient dim {}",
            x.len(),
            self.ambient_dim()
        );
        assert_eq!(z.len(), self.ambient_dim());
        self.members
            .iter()
            .map(|m| {
                let px = m.projection.dot(&x);
                let pz = m.projection.dot(&z);
                m.model.matrix().dot(&pz).dot(&px)
            })
            .sum()
    }

    /// Folds the ensemble into one ambient-space model,
    /// sum_n P_n' M_n P_n. Scores agree with [`Self::similarity`] up to
    /// floating-point summation order.
    pub fn collapse(&self) -> SimilarityModel {
        let ambient = self.ambient_dim();
        let mut total = Array2::zeros((ambient, ambient));
        for m in &self.members {
            total += &m.projection.t().dot(&m.model.matrix().dot(&m.projection));
        }
        SimilarityModel::from_matrix(total).expect("collapse produces a square matrix")
    }
}

impl SimilarityMeasure for EnsembleModel {
    fn ambient_dim(&self) -> usize {
        self.ambient_dim()
    }

    fn score(&self, x: ArrayView1<'_, f64>, z: ArrayView1<'_, f64>) -> f64 {
        self.similarity(x, z)
    }
}

/// Hinge loss of one triplet: [b - s(x_i, x_j) + s(x_i, x_l)]+.
pub fn triplet_loss<S: SimilarityMeasure>(
    sim: &S,
    xi: ArrayView1<'_, f64>,
    xj: ArrayView1<'_, f64>,
    xl: ArrayView1<'_, f64>,
    b: f64,
) -> f64 {
    (b - sim.score(xi, xj) + sim.score(xi, xl)).max(0.0)
}

/// Subgradient of the triplet hinge with respect to M, taking the active
/// branch at the kink: `Some(-x_i (x_j - x_l)')` when
/// b - s(x_i, x_j) + s(x_i, x_l) >= 0, `None` on the flat branch.
pub fn triplet_loss_gradient(
    model: &SimilarityModel,
    xi: ArrayView1<'_, f64>,
    xj: ArrayView1<'_, f64>,
    xl: ArrayView1<'_, f64>,
    b: f64,
) -> Option<Array2<f64>> {
    let margin = b - model.similarity(xi, xj) + model.similarity(xi, xl);
    if margin < 0.0 {
        return None;
    }
    let d = model.dim();
    let mut grad = Array2::zeros((d, d));
    for a in 0..d {
        for c in 0..d {
            grad[[a, c]] = -xi[a] * (xj[c] - xl[c]);
        }
    }
    Some(grad)
}

/// Total hinge objective over every triplet the pair sets generate:
/// sum_i sum_{j in targets(i)} sum_{l in imposters(i)} of the triplet hinge.
pub fn objective<S: SimilarityMeasure>(
    sim: &S,
    data: &LabeledDataset,
    pairs: &SymmetricPairSets,
    b: f64,
) -> f64 {
    let anchors: Vec<u32> = (0..pairs.len() as u32).collect();
    objective_over(sim, data, pairs, b, &anchors)
}

/// Hinge objective restricted to the given anchor samples. Each anchor's
/// pair scores are computed once and reused across its triplet grid.
pub fn objective_over<S: SimilarityMeasure>(
    sim: &S,
    data: &LabeledDataset,
    pairs: &SymmetricPairSets,
    b: f64,
    anchors: &[u32],
) -> f64 {
    assert_eq!(
        pairs.len(),
        data.len(),
        "objective: pair sets cover {} samples, dataset has {}",
        pairs.len(),
        data.len()
    );
    let mut total = 0.0;
    for &i in anchors {
        let i = i as usize;
        let xi = data.feature(i);
        let target_scores: Vec<f64> = pairs
            .target_pairs(i)
            .iter()
            .map(|&j| sim.score(xi, data.feature(j as usize)))
            .collect();
        let imposter_scores: Vec<f64> = pairs
            .imposter_pairs(i)
            .iter()
            .map(|&l| sim.score(xi, data.feature(l as usize)))
            .collect();
        for &sj in &target_scores {
            for &sl in &imposter_scores {
                total += (b - sj + sl).max(0.0);
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighborhood::{build_index, graph_weights, symmetrize};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(dim: usize, rng: &mut ChaCha8Rng) -> SimilarityModel {
        let m = Array2::from_shape_fn((dim, dim), |_| rng.random_range(-1.0..1.0));
        SimilarityModel::from_matrix(m).unwrap()
    }

    fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
        loop {
            let v = Array1::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0_f64));
            let norm = v.dot(&v).sqrt();
            if norm > 1e-3 {
                return v / norm;
            }
        }
    }

    #[test]
    fn identity_model_is_a_dot_product() {
        let model = SimilarityModel::identity(3);
        let x = array![1.0, 0.0, 0.0];
        let z = array![0.0, 1.0, 0.0];
        assert_eq!(model.similarity(x.view(), z.view()), 0.0);
        assert_eq!(model.similarity(x.view(), x.view()), 1.0);
        assert_abs_diff_eq!(model.frob_target, 3.0_f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn diagonal_model_weights_coordinates() {
        let model = SimilarityModel::from_matrix(array![[2.0, 0.0], [0.0, 1.0]]).unwrap();
        let x = array![1.0, 1.0];
        let z = array![1.0, -1.0];
        assert_eq!(model.similarity(x.view(), z.view()), 1.0);
    }

    #[test]
    #[should_panic(expected = "does not match model dim")]
    fn mismatched_vector_length_panics() {
        let model = SimilarityModel::identity(3);
        let x = array![1.0, 0.0];
        let z = array![0.0, 1.0, 0.0];
        model.similarity(x.view(), z.view());
    }

    #[test]
    fn non_square_matrix_rejected() {
        assert!(SimilarityModel::from_matrix(Array2::zeros((2, 3))).is_err());
    }

    #[test]
    fn renormalize_hits_the_target_norm() {
        let mut model = SimilarityModel::from_matrix(array![[3.0, 0.0], [0.0, 4.0]]).unwrap();
        model.renormalize();
        assert_abs_diff_eq!(model.frobenius_norm(), 2.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn symmetrize_averages_with_the_transpose() {
        let mut model = SimilarityModel::from_matrix(array![[1.0, 4.0], [2.0, 3.0]]).unwrap();
        model.symmetrize();
        assert_eq!(model.matrix(), &array![[1.0, 3.0], [3.0, 3.0]]);
    }

    #[test]
    fn triplet_loss_hand_values() {
        let model = SimilarityModel::from_matrix(array![[1.0]]).unwrap();
        // 1-D vectors make the scores explicit: s(x, z) = x * z.
        let xi = array![1.0];
        let far = array![0.1];
        let near = array![0.5];
        // Target scores 0.5, imposter 0.1: margin satisfied, zero loss.
        assert_eq!(
            triplet_loss(&model, xi.view(), near.view(), far.view(), 0.02),
            0.0
        );
        // Equal scores: loss is exactly the margin.
        assert_abs_diff_eq!(
            triplet_loss(&model, xi.view(), near.view(), near.view(), 0.02),
            0.02,
            epsilon = 1e-15
        );
        // Imposter ahead by 0.4: loss 0.42.
        assert_abs_diff_eq!(
            triplet_loss(&model, xi.view(), far.view(), near.view(), 0.02),
            0.42,
            epsilon = 1e-15
        );
    }

    #[test]
    fn gradient_is_negative_outer_product_when_active() {
        let model = SimilarityModel::identity(2);
        let xi = array![1.0, 0.0];
        let xj = array![0.0, 1.0];
        let xl = array![1.0, 0.0];
        // margin = b - 0 + 1 > 0: active.
        let grad = triplet_loss_gradient(&model, xi.view(), xj.view(), xl.view(), 0.02).unwrap();
        assert_eq!(grad, array![[1.0, -1.0], [0.0, 0.0]]);
        // Swapped roles: margin = b - 1 + 0 < 0, flat branch.
        assert!(triplet_loss_gradient(&model, xi.view(), xl.view(), xj.view(), 0.02).is_none());
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = 5;
        let h = 1e-6;
        let b = 0.02;
        let mut checked = 0;
        while checked < 10 {
            let model = random_model(dim, &mut rng);
            let xi = random_unit(dim, &mut rng);
            let xj = random_unit(dim, &mut rng);
            let xl = random_unit(dim, &mut rng);
            let margin =
                b - model.similarity(xi.view(), xj.view()) + model.similarity(xi.view(), xl.view());
            if margin < 0.05 {
                continue; // keep a safe distance from the kink
            }
            let grad =
                triplet_loss_gradient(&model, xi.view(), xj.view(), xl.view(), b).unwrap();
            for a in 0..dim {
                for c in 0..dim {
                    let mut plus = model.clone();
                    plus.matrix_mut()[[a, c]] += h;
                    let mut minus = model.clone();
                    minus.matrix_mut()[[a, c]] -= h;
                    let fd = (triplet_loss(&plus, xi.view(), xj.view(), xl.view(), b)
                        - triplet_loss(&minus, xi.view(), xj.view(), xl.view(), b))
                        / (2.0 * h);
                    let denom = grad[[a, c]].abs().max(fd.abs()).max(1e-3);
                    assert!(
                        (fd - grad[[a, c]]).abs() / denom < 1e-5,
                        "entry ({a},{c}): fd {fd} vs analytic {}",
                        grad[[a, c]]
                    );
                }
            }
            checked += 1;
        }
    }

    fn random_labeled(n: usize, d: usize, classes: u32, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let labels = (0..n).map(|_| rng.random_range(1..=classes)).collect();
        LabeledDataset::new(features, labels).unwrap()
    }

    #[test]
    fn objective_matches_explicit_triple_loop() {
        let data = random_labeled(30, 4, 3, 17);
        let index = build_index(&data, 5).unwrap();
        let pairs = symmetrize(&index);
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let model = random_model(4, &mut rng);
        let b = 0.02;

        let got = objective(&model, &data, &pairs, b);

        let mut expected = 0.0;
        for i in 0..data.len() {
            for &j in pairs.target_pairs(i) {
                for &l in pairs.imposter_pairs(i) {
                    expected += triplet_loss(
                        &model,
                        data.feature(i),
                        data.feature(j as usize),
                        data.feature(l as usize),
                        b,
                    );
                }
            }
        }
        let rel = (got - expected).abs() / expected.abs().max(1.0);
        assert!(rel < 1e-9, "objective {got} vs oracle {expected}");
    }

    #[test]
    fn objective_of_empty_pair_sets_is_zero() {
        let data = random_labeled(4, 3, 2, 1);
        let pairs = crate::neighborhood::SymmetricPairSets::from_parts(
            vec![vec![], vec![], vec![], vec![]],
            vec![vec![], vec![], vec![], vec![]],
        )
        .unwrap();
        let model = SimilarityModel::identity(3);
        assert_eq!(objective(&model, &data, &pairs, 0.02), 0.0);
    }

    #[test]
    fn single_triplet_objective_is_its_hinge() {
        let features = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        let data = LabeledDataset::new(features, vec![1, 1, 2]).unwrap();
        let pairs = crate::neighborhood::SymmetricPairSets::from_parts(
            vec![vec![1], vec![0], vec![]],
            vec![vec![2], vec![], vec![0]],
        )
        .unwrap();
        let model = SimilarityModel::identity(2);
        // Anchor 0: s(x0,x1)=0, s(x0,x2)=1 -> 1.02. Anchor 1 has no
        // imposters beyond the empty set... anchor 1: targets {0},
        // imposters {} -> nothing. Anchor 2: targets {} -> nothing.
        assert_abs_diff_eq!(objective(&model, &data, &pairs, 0.02), 1.02, epsilon = 1e-12);
    }

    #[test]
    fn weighted_graph_form_equals_triplet_sum() {
        // The linear (hinge-free) embedding objective written with per-edge
        // weights must equal the explicit triplet sum of score differences.
        for seed in [3, 4, 5] {
            let data = random_labeled(40, 5, 3, seed);
            let index = build_index(&data, 4).unwrap();
            let pairs = symmetrize(&index);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let model = random_model(5, &mut rng);

            let weights = graph_weights(&pairs);
            let weighted: f64 = weights
                .iter()
                .map(|(&(i, j), &w)| {
                    w as f64 * model.similarity(data.feature(i as usize), data.feature(j as usize))
                })
                .sum();

            let mut triplet_sum = 0.0;
            for i in 0..data.len() {
                for &j in pairs.target_pairs(i) {
                    for &l in pairs.imposter_pairs(i) {
                        triplet_sum += -model
                            .similarity(data.feature(i), data.feature(j as usize))
                            + model.similarity(data.feature(i), data.feature(l as usize));
                    }
                }
            }
            let rel = (weighted - triplet_sum).abs() / weighted.abs().max(triplet_sum.abs()).max(1.0);
            assert!(rel < 1e-9, "seed {seed}: {weighted} vs {triplet_sum}");
        }
    }

    #[test]
    fn single_member_identity_ensemble_equals_plain_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = random_model(4, &mut rng);
        let ens = EnsembleModel::from_members(vec![EnsembleMember {
            projection: Array2::eye(4),
            model: model.clone(),
        }])
        .unwrap();
        for _ in 0..20 {
            let x = random_unit(4, &mut rng);
            let z = random_unit(4, &mut rng);
            let a = ens.similarity(x.view(), z.view());
            let b = model.similarity(x.view(), z.view());
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn ensemble_score_matches_collapsed_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ambient = 8;
        let d = 3;
        let members = (0..4)
            .map(|_| EnsembleMember {
                projection: Array2::from_shape_fn((d, ambient), |_| rng.random_range(-1.0..1.0)),
                model: random_model(d, &mut rng),
            })
            .collect();
        let ens = EnsembleModel::from_members(members).unwrap();
        let collapsed = ens.collapse();
        for _ in 0..100 {
            let x = random_unit(ambient, &mut rng);
            let z = random_unit(ambient, &mut rng);
            let a = ens.similarity(x.view(), z.view());
            let b = collapsed.similarity(x.view(), z.view());
            let rel = (a - b).abs() / a.abs().max(b.abs()).max(1.0);
            assert!(rel < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn collapse_of_axis_blocks_is_block_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        // Two members selecting disjoint coordinate pairs of a 4-D space.
        let mut p0 = Array2::zeros((2, 4));
        p0[[0, 0]] = 1.0;
        p0[[1, 1]] = 1.0;
        let mut p1 = Array2::zeros((2, 4));
        p1[[0, 2]] = 1.0;
        p1[[1, 3]] = 1.0;
        let m0 = random_model(2, &mut rng);
        let m1 = random_model(2, &mut rng);
        let ens = EnsembleModel::from_members(vec![
            EnsembleMember { projection: p0, model: m0.clone() },
            EnsembleMember { projection: p1, model: m1.clone() },
        ])
        .unwrap();
        let collapsed = ens.collapse();
        let c = collapsed.matrix();
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(c[[a, b]], m0.matrix()[[a, b]]);
                assert_eq!(c[[a + 2, b + 2]], m1.matrix()[[a, b]]);
                assert_eq!(c[[a, b + 2]], 0.0);
                assert_eq!(c[[a + 2, b]], 0.0);
            }
        }
    }

    #[test]
    fn collapse_of_identity_projection_returns_member_matrix_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let model = random_model(6, &mut rng);
        let ens = EnsembleModel::from_members(vec![EnsembleMember {
            projection: Array2::eye(6),
            model: model.clone(),
        }])
        .unwrap();
        assert_eq!(ens.collapse().matrix(), model.matrix());
    }

    #[test]
    fn mismatched_member_shapes_rejected() {
        let ok = EnsembleMember {
            projection: Array2::zeros((2, 4)),
            model: SimilarityModel::identity(2),
        };
        let wrong_ambient = EnsembleMember {
            projection: Array2::zeros((2, 5)),
            model: SimilarityModel::identity(2),
        };
        let wrong_model = EnsembleMember {
            projection: Array2::zeros((2, 4)),
            model: SimilarityModel::identity(3),
        };
        assert!(EnsembleModel::from_members(vec![ok.clone(), wrong_ambient]).is_err());
        assert!(EnsembleModel::from_members(vec![wrong_model]).is_err());
        assert!(EnsembleModel::from_members(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn similarity_is_bilinear(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = 4;
            let model = random_model(dim, &mut rng);
            let x = random_unit(dim, &mut rng);
            let y = random_unit(dim, &mut rng);
            let z = random_unit(dim, &mut rng);
            let a = rng.random_range(-2.0..2.0);
            let c = rng.random_range(-2.0..2.0);
            let combo = &x * a + &y * c;
            let lhs = model.similarity(combo.view(), z.view());
            let rhs = a * model.similarity(x.view(), z.view())
                + c * model.similarity(y.view(), z.view());
            prop_assert!((lhs - rhs).abs() < 1e-9);
            // Right argument too.
            let rlhs = model.similarity(z.view(), combo.view());
            let rrhs = a * model.similarity(z.view(), x.view())
                + c * model.similarity(z.view(), y.view());
            prop_assert!((rlhs - rrhs).abs() < 1e-9);
        }

        #[test]
        fn symmetrized_model_scores_symmetrically(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut model = random_model(5, &mut rng);
            model.symmetrize();
            let x = random_unit(5, &mut rng);
            let z = random_unit(5, &mut rng);
            let forward = model.similarity(x.view(), z.view());
            let backward = model.similarity(z.view(), x.view());
            prop_assert!((forward - backward).abs() < 1e-12);
        }
    }
}
