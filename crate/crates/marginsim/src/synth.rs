//! Seeded synthetic datasets for demos, tests, and benchmark runs.
//!
//! The main generator builds a four-class set with two well-separated
//! coarse groups, each split into two overlapping fine-grained clusters.
//! Euclidean distance resolves the coarse split easily but blurs the fine
//! one, which is exactly the regime a learned similarity should win in.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::LabeledDataset;
use crate::error::Result;

/// Two spherical Gaussian classes with centers `separation` apart along the
/// first axis.
pub fn two_class_gaussians(
    n_per_class: usize,
    dim: usize,
    separation: f64,
    noise: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * n_per_class;
    let mut features = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for class in 0..2 {
        let offset = if class == 0 { -0.5 } else { 0.5 } * separation;
        for s in 0..n_per_class {
            let row = class * n_per_class + s;
            for c in 0..dim {
                let g: f64 = StandardNormal.sample(&mut rng);
                features[[row, c]] = noise * g;
            }
            features[[row, 0]] += offset;
            labels.push(class as u32 + 1);
        }
    }
    LabeledDataset::new(features, labels)
}

/// Geometry of the four-class fine-grained generator.
#[derive(Debug, Clone)]
pub struct FineGrainedConfig {
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Distance between the two coarse group centers (first axis).
    pub coarse_sep: f64,
    /// Distance between the two fine cluster centers inside a coarse group.
    pub fine_sep: f64,
    /// Isotropic noise standard deviation.
    pub noise: f64,
    pub seed: u64,
}

impl Default for FineGrainedConfig {
    fn default() -> Self {
        Self {
            dim: 50,
            train_per_class: 200,
            test_per_class: 200,
            coarse_sep: 8.0,
            fine_sep: 2.4,
            noise: 1.0,
            seed: 0,
        }
    }
}

/// Four classes in two coarse pairs. Classes 1 and 2 sit around the negative
/// pole of the first axis and differ along the second; classes 3 and 4 sit
/// around the positive pole and differ along the third. Returns
/// (train, test).
pub fn fine_grained_four_class(
    config: &FineGrainedConfig,
) -> Result<(LabeledDataset, LabeledDataset)> {
    assert!(config.dim >= 3, "fine-grained generator needs at least 3 dims");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let centers = class_centers(config);

    let mut draw_split = |per_class: usize| -> (Array2<f64>, Vec<u32>) {
        let n = 4 * per_class;
        let mut features = Array2::zeros((n, config.dim));
        let mut labels = Vec::with_capacity(n);
        for class in 0..4 {
            for s in 0..per_class {
                let row = class * per_class + s;
                for c in 0..config.dim {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    features[[row, c]] = centers[class][c] + config.noise * g;
                }
                labels.push(class as u32 + 1);
            }
        }
        (features, labels)
    };

    let (train_x, train_y) = draw_split(config.train_per_class);
    let (test_x, test_y) = draw_split(config.test_per_class);
    Ok((
        LabeledDataset::new(train_x, train_y)?,
        LabeledDataset::new(test_x, test_y)?,
    ))
}

fn class_centers(config: &FineGrainedConfig) -> [Array1<f64>; 4] {
    let s = config.coarse_sep / 2.0;
    let f = config.fine_sep / 2.0;
    let mut centers = [
        Array1::zeros(config.dim),
        Array1::zeros(config.dim),
        Array1::zeros(config.dim),
        Array1::zeros(config.dim),
    ];
    centers[0][0] = -s;
    centers[0][1] = -f;
    centers[1][0] = -s;
    centers[1][1] = f;
    centers[2][0] = s;
    centers[2][2] = -f;
    centers[3][0] = s;
    centers[3][2] = f;
    centers
}
