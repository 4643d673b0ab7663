//! Labeled feature datasets and the PCA preprocessing pipeline.
//!
//! A [`LabeledDataset`] is an N x D row-major feature matrix plus one class
//! label per row. Labels are remapped on construction to contiguous ids
//! `1..=C` (ascending original id order); the original ids are retained so
//! files written back out stay meaningful.
//!
//! Preprocessing follows a fixed order: center by the PCA mean, project onto
//! the PCA basis, then L2-normalize each projected row. Normalization comes
//! last so every training vector has unit length.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Row-major feature matrix with one positive class label per row.
///
/// Labels are stored remapped to `1..=C`; `original_label` recovers the id
/// the data arrived with.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<u32>,
    /// `label_map[c - 1]` is the original id of remapped class `c`.
    label_map: Vec<u32>,
}

impl LabeledDataset {
    /// Builds a dataset, remapping arbitrary positive labels to `1..=C`.
    ///
    /// Remapped ids follow ascending original-id order, so `{5, 5, 9}`
    /// becomes `{1, 1, 2}`.
    pub fn new(features: Array2<f64>, labels: Vec<u32>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "label count vs feature rows",
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        if let Some(row) = labels.iter().position(|&l| l == 0) {
            return Err(Error::InvalidLabel {
                row,
                label: "0".to_string(),
            });
        }
        let mut label_map: Vec<u32> = labels.clone();
        label_map.sort_unstable();
        label_map.dedup();
        let remapped = labels
            .iter()
            .map(|l| label_map.binary_search(l).unwrap() as u32 + 1)
            .collect();
        Ok(Self {
            features,
            labels: remapped,
            label_map,
        })
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    /// Feature dimensionality.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Number of distinct classes.
    pub fn n_classes(&self) -> usize {
        self.label_map.len()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    /// Remapped labels, each in `1..=C`.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    /// Original id for a remapped class.
    pub fn original_label(&self, class: u32) -> u32 {
        self.label_map[class as usize - 1]
    }

    /// Per-row labels as the caller supplied them. Two datasets remap
    /// independently, so cross-dataset comparisons must use these.
    pub fn original_labels(&self) -> Vec<u32> {
        self.labels.iter().map(|&c| self.original_label(c)).collect()
    }

    /// Copy of the dataset without the given rows (used to drop zero-norm
    /// rows before training). Labels are re-expressed as original ids and
    /// remapped, so classes that vanish entirely compact correctly.
    pub fn without_rows(&self, drop: &[usize]) -> Result<Self> {
        let keep: Vec<usize> = (0..self.len()).filter(|i| !drop.contains(i)).collect();
        let features = self.features.select(Axis(0), &keep);
        let labels = keep
            .iter()
            .map(|&i| self.original_label(self.labels[i]))
            .collect();
        Self::new(features, labels)
    }
}

/// Fitted PCA: a mean vector in the input space and `target_dim` orthonormal
/// principal directions stored as rows.
#[derive(Debug, Clone)]
pub struct PcaTransform {
    /// Per-feature mean of the rows the fit saw, length `input_dim`.
    pub mean: Array1<f64>,
    /// `target_dim x input_dim`; rows are orthonormal principal directions.
    pub basis: Array2<f64>,
    /// Covariance eigenvalue per kept direction, non-increasing.
    pub explained_variance: Vec<f64>,
}

impl PcaTransform {
    /// The do-nothing transform: zero mean, identity basis. Preprocessing
    /// with it reduces to plain length normalization.
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            basis: Array2::eye(dim),
            explained_variance: vec![0.0; dim],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn target_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Centers and projects one input-space vector.
    pub fn project(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        assert_eq!(
            x.len(),
            self.input_dim(),
            "project: vector length {} does not match input dim {}",
            x.len(),
            self.input_dim()
        );
        self.basis.dot(&(&x - &self.mean))
    }

    /// Maps a projected vector back to the input space.
    pub fn reconstruct(&self, z: ArrayView1<'_, f64>) -> Array1<f64> {
        assert_eq!(
            z.len(),
            self.target_dim(),
            "reconstruct: vector length {} does not match target dim {}",
            z.len(),
            self.target_dim()
        );
        &self.basis.t().dot(&z) + &self.mean
    }
}

/// Knobs for [`fit_pca`].
#[derive(Debug, Clone)]
pub struct PcaConfig {
    /// Row budget for covariance estimation on wide inputs.
    pub row_subset: usize,
    /// Input dims at or below this use every row; above it, a uniform
    /// row subset of size `row_subset` estimates the covariance.
    pub exact_dim_limit: usize,
    /// Seed for the row subset draw.
    pub seed: u64,
}

impl Default for PcaConfig {
    fn default() -> Self {
        Self {
            row_subset: 10_000,
            exact_dim_limit: 2_000,
            seed: 0,
        }
    }
}

/// Fits PCA by eigendecomposition of the input covariance.
///
/// The covariance uses the 1/(m-1) convention over the rows it saw. Basis
/// rows are sorted by non-increasing eigenvalue; each row's sign is fixed so
/// its largest-magnitude component is positive.
pub fn fit_pca(data: &LabeledDataset, target_dim: usize, config: &PcaConfig) -> Result<PcaTransform> {
    let d_in = data.dim();
    if target_dim == 0 || target_dim > d_in {
        return Err(Error::InvalidParameter {
            name: "target_dim",
            reason: format!("must be in 1..={d_in}, got {target_dim}"),
        });
    }
    if data.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "dataset",
            reason: "PCA needs at least 2 rows".to_string(),
        });
    }

    let rows: Vec<usize> = if d_in <= config.exact_dim_limit || data.len() <= config.row_subset {
        (0..data.len()).collect()
    } else {
        if config.row_subset < 2 {
            return Err(Error::InvalidParameter {
                name: "row_subset",
                reason: "covariance subset needs at least 2 rows".to_string(),
            });
        }
        let mut all: Vec<usize> = (0..data.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        all.shuffle(&mut rng);
        let mut subset = all[..config.row_subset].to_vec();
        subset.sort_unstable();
        subset
    };

    let m = rows.len();
    let x = data.features().select(Axis(0), &rows);
    let mean = x.mean_axis(Axis(0)).expect("non-empty row subset");
    let centered = &x - &mean.view().insert_axis(Axis(0));
    let cov = centered.t().dot(&centered) / (m as f64 - 1.0);

    let (eigenvalues, eigenvectors) = symmetric_eigen_desc(&cov);

    let mut basis = Array2::zeros((target_dim, d_in));
    for r in 0..target_dim {
        let mut row = basis.row_mut(r);
        row.assign(&eigenvectors.row(r));
        // Sign convention: make the largest-magnitude component positive.
        let lead = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap().then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap();
        if row[lead] < 0.0 {
            row.mapv_inplace(|v| -v);
        }
    }

    Ok(PcaTransform {
        mean,
        basis,
        explained_variance: eigenvalues[..target_dim].to_vec(),
    })
}

/// Eigendecomposition of a symmetric matrix, eigenvalues non-increasing and
/// eigenvectors returned as matching rows.
fn symmetric_eigen_desc(sym: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = sym.nrows();
    let m = nalgebra::DMatrix::from_fn(n, n, |r, c| sym[[r, c]]);
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (r, &i) in order.iter().enumerate() {
        for c in 0..n {
            vectors[[r, c]] = eig.eigenvectors[(c, i)];
        }
    }
    (eigenvalues, vectors)
}

/// Rows whose preprocessed feature vector came out all-zero.
#[derive(Debug, Clone, Default)]
pub struct PreprocessReport {
    pub zero_rows: Vec<usize>,
}

/// Centers, projects, and length-normalizes every row.
///
/// Zero-norm projected rows are left as zeros and flagged in the report;
/// drop them (see [`LabeledDataset::without_rows`]) before training.
pub fn apply_preprocessing(
    data: &LabeledDataset,
    pca: &PcaTransform,
) -> Result<(LabeledDataset, PreprocessReport)> {
    if pca.input_dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            context: "preprocessing input dim",
            expected: pca.input_dim(),
            got: data.dim(),
        });
    }
    let centered = data.features() - &pca.mean.view().insert_axis(Axis(0));
    let mut projected = centered.dot(&pca.basis.t());
    let zero_rows = normalize_rows_in_place(&mut projected);
    let labels = (0..data.len())
        .map(|i| data.original_label(data.label(i)))
        .collect();
    let out = LabeledDataset::new(projected, labels)?;
    Ok((out, PreprocessReport { zero_rows }))
}

/// Scales each row to unit L2 length, returning the indices of zero rows.
///
/// Rows already unit within the dataset tolerance of 1e-6 are left
/// untouched: they already satisfy the preprocessed-row contract, and the
/// skip makes repeated normalization exactly idempotent and keeps rows
/// loaded from float32 storage bit-stable.
pub fn normalize_rows_in_place(m: &mut Array2<f64>) -> Vec<usize> {
    let mut zero_rows = Vec::new();
    for (i, mut row) in m.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            zero_rows.push(i);
        } else if (norm - 1.0).abs() > 1e-6 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    zero_rows
}
