//! Stochastic subgradient training of a single bilinear similarity model.
//!
//! One pass of the trainer visits every usable sample in a fresh random
//! order, picks one margin-violating triplet (anchor, target, imposter) for
//! it, and applies the rank-one step M <- M + rho * x_i (x_j - x_l)'. The
//! step size decays as rho_0 / sqrt((t - 1) / |S| + 1) where t counts
//! applied updates and never resets, so the schedule tracks effective steps
//! rather than epochs.
//!
//! Triplet selection is the expensive choice. `Selective` picks the worst
//! offender: the least-similar target paired with the most-similar imposter,
//! found with one similarity evaluation per candidate. `Uniform` draws one
//! random pair and skips it if it does not violate the margin.

use std::time::Instant;

use ndarray::ArrayView1;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::neighborhood::SymmetricPairSets;
use crate::similarity::{objective_over, SimilarityModel};

/// Triplet sampling strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Least-similar target with most-similar imposter (worst violator).
    Selective,
    /// One uniformly random (target, imposter) pair per visit.
    Uniform,
}

/// Trainer knobs. Defaults follow the evaluated setup: margin 0.02, base
/// step 0.2, at most 30 epochs, convergence when the audited objective's
/// relative change stays under 1e-3 for two consecutive epochs.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Hinge margin b.
    pub b: f64,
    /// Base step size rho_0.
    pub rho0: f64,
    pub max_epochs: usize,
    pub convergence_tol: f64,
    pub sampling: Sampling,
    /// Average M with its transpose at the end of every epoch.
    pub symmetrize: bool,
    /// Rescale M to Frobenius norm sqrt(D) after every update.
    pub frob_normalize: bool,
    pub seed: u64,
    /// Number of anchors the per-epoch objective audit uses; 0 means all
    /// usable samples. The subset is drawn once per run and then fixed.
    pub audit_subsample: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            b: 0.02,
            rho0: 0.2,
            max_epochs: 30,
            convergence_tol: 1e-3,
            sampling: Sampling::Selective,
            symmetrize: false,
            frob_normalize: true,
            seed: 0,
            audit_subsample: 128,
        }
    }
}

/// Diminishing step size rho_0 / sqrt((t - 1) / |S| + 1).
pub fn step_size(t: u64, dataset_size: usize, rho0: f64) -> f64 {
    rho0 / ((t as f64 - 1.0) / dataset_size as f64 + 1.0).sqrt()
}

/// Operation counters accumulated over a whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainStats {
    pub updates: u64,
    pub skips: u64,
    /// Arithmetic ops spent inside parameter updates (rank-one step plus
    /// optional renormalization); grows as Theta(D^2) per update.
    pub update_flops: u64,
    /// Candidate similarity evaluations spent selecting triplets.
    pub similarity_evals: u64,
}

/// One epoch of the training trace.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Hinge objective on the fixed audit subset, measured after the epoch.
    pub objective: f64,
    pub updates: u64,
    pub skips: u64,
    pub seconds: f64,
}

/// Per-epoch records plus run-level counters.
#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    pub stats: TrainStats,
    /// True when the run stopped on the convergence rule rather than the
    /// epoch cap.
    pub converged: bool,
}

/// Picks one margin-violating triplet for `anchor`, or `None` when the
/// chosen pair satisfies the margin (or the anchor has no pairs).
///
/// `Selective` scans every candidate exactly once; ties go to the lowest
/// sample index. `Uniform` draws one pair using `rng`.
pub fn select_triplet<R: Rng>(
    anchor: usize,
    model: &SimilarityModel,
    data: &LabeledDataset,
    pairs: &SymmetricPairSets,
    b: f64,
    sampling: Sampling,
    rng: &mut R,
) -> Option<(u32, u32)> {
    select_triplet_counted(anchor, model, data, pairs, b, sampling, rng).0
}

pub(crate) fn select_triplet_counted<R: Rng>(
    anchor: usize,
    model: &SimilarityModel,
    data: &LabeledDataset,
    pairs: &SymmetricPairSets,
    b: f64,
    sampling: Sampling,
    rng: &mut R,
) -> (Option<(u32, u32)>, u64) {
    let targets = pairs.target_pairs(anchor);
    let imposters = pairs.imposter_pairs(anchor);
    if targets.is_empty() || imposters.is_empty() {
        return (None, 0);
    }
    let xi = data.feature(anchor);
    match sampling {
        Sampling::Selective => {
            let left = model.left_vector(xi);
            let mut best_j = targets[0];
            let mut best_j_score = f64::INFINITY;
            for &j in targets {
                let s = left.dot(&data.feature(j as usize));
                if s < best_j_score {
                    best_j_score = s;
                    best_j = j;
                }
            }
            let mut best_l = imposters[0];
            let mut best_l_score = f64::NEG_INFINITY;
            for &l in imposters {
                let s = left.dot(&data.feature(l as usize));
                if s > best_l_score {
                    best_l_score = s;
                    best_l = l;
                }
            }
            let evals = (targets.len() + imposters.len()) as u64;
            if b - best_j_score + best_l_score > 0.0 {
                (Some((best_j, best_l)), evals)
            } else {
                (None, evals)
            }
        }
        Sampling::Uniform => {
            let j = targets[rng.random_range(0..targets.len())];
            let l = imposters[rng.random_range(0..imposters.len())];
            let sj = model.similarity(xi, data.feature(j as usize));
            let sl = model.similarity(xi, data.feature(l as usize));
            if b - sj + sl > 0.0 {
                (Some((j, l)), 2)
            } else {
                (None, 2)
            }
        }
    }
}

/// Applies M <- M + rho * x_i (x_j - x_l)', optionally rescaling to the
/// model's target Frobenius norm afterwards.
pub fn apply_update(
    model: &mut SimilarityModel,
    xi: ArrayView1<'_, f64>,
    xj: ArrayView1<'_, f64>,
    xl: ArrayView1<'_, f64>,
    rho: f64,
    frob_normalize: bool,
) {
    let mut stats = TrainStats::default();
    apply_update_counted(model, xi, xj, xl, rho, frob_normalize, &mut stats);
}

pub(crate) fn apply_update_counted(
    model: &mut SimilarityModel,
    xi: ArrayView1<'_, f64>,
    xj: ArrayView1<'_, f64>,
    xl: ArrayView1<'_, f64>,
    rho: f64,
    frob_normalize: bool,
    stats: &mut TrainStats,
) {
    let d = model.dim();
    assert_eq!(xi.len(), d, "apply_update: anchor length mismatch");
    assert_eq!(xj.len(), d, "apply_update: target length mismatch");
    assert_eq!(xl.len(), d, "apply_update: imposter length mismatch");

    let diff: Vec<f64> = xj.iter().zip(xl.iter()).map(|(a, b)| a - b).collect();
    let m = model.matrix_mut();
    for a in 0..d {
        let scale = rho * xi[a];
        let mut row = m.row_mut(a);
        for (c, entry) in row.iter_mut().enumerate() {
            *entry += scale * diff[c];
        }
    }
    // d subtractions, d scale factors, then a multiply-add per entry.
    stats.update_flops += 2 * (d as u64) + 2 * (d as u64) * (d as u64);

    if frob_normalize {
        model.renormalize();
        // Square-accumulate every entry, then one scale pass.
        stats.update_flops += 3 * (d as u64) * (d as u64) + 2;
    }
}

/// Epoch snapshot handed to a training observer.
pub struct EpochSnapshot<'a> {
    pub epoch: usize,
    pub model: &'a SimilarityModel,
    pub record: &'a EpochRecord,
}

/// Trains an identity-initialized model. See [`train_with_observer`] for
/// the variant that exposes per-epoch snapshots.
pub fn train(
    data: &LabeledDataset,
    pairs: &SymmetricPairSets,
    config: &TrainConfig,
) -> Result<(SimilarityModel, TrainTrace)> {
    train_with_observer(data, pairs, config, |_| {})
}

/// Trains an identity-initialized model, invoking `observer` after every
/// epoch (after any symmetrization, before the convergence check).
pub fn train_with_observer<F: FnMut(&EpochSnapshot<'_>)>(
    data: &LabeledDataset,
    pairs: &SymmetricPairSets,
    config: &TrainConfig,
    mut observer: F,
) -> Result<(SimilarityModel, TrainTrace)> {
    validate_config(config)?;
    if pairs.len() != data.len() {
        return Err(Error::DimensionMismatch {
            context: "pair sets vs dataset",
            expected: data.len(),
            got: pairs.len(),
        });
    }
    let usable = pairs.usable_indices();
    if usable.is_empty() {
        return Err(Error::NoUsableSample);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let audit = pick_audit_subset(&usable, config.audit_subsample, &mut rng);

    let mut model = SimilarityModel::identity(data.dim());
    let mut trace = TrainTrace::default();
    let mut t: u64 = 1;
    let mut order = usable.clone();
    let mut prev_rel: Option<f64> = None;
    let mut prev_objective: Option<f64> = None;

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut updates = 0u64;
        let mut skips = 0u64;
        for &i in &order {
            let (picked, evals) = select_triplet_counted(
                i as usize,
                &model,
                data,
                pairs,
                config.b,
                config.sampling,
                &mut rng,
            );
            trace.stats.similarity_evals += evals;
            match picked {
                Some((j, l)) => {
                    let rho = step_size(t, data.len(), config.rho0);
                    apply_update_counted(
                        &mut model,
                        data.feature(i as usize),
                        data.feature(j as usize),
                        data.feature(l as usize),
                        rho,
                        config.frob_normalize,
                        &mut trace.stats,
                    );
                    t += 1;
                    updates += 1;
                }
                None => skips += 1,
            }
        }
        if config.symmetrize {
            model.symmetrize();
            if config.frob_normalize {
                model.renormalize();
            }
        }
        let objective = objective_over(&model, data, pairs, config.b, &audit);
        let record = EpochRecord {
            epoch,
            objective,
            updates,
            skips,
            seconds: started.elapsed().as_secs_f64(),
        };
        observer(&EpochSnapshot {
            epoch,
            model: &model,
            record: &record,
        });
        trace.stats.updates += updates;
        trace.stats.skips += skips;
        trace.epochs.push(record);

        let rel = prev_objective
            .map(|prev: f64| (objective - prev).abs() / prev.abs().max(1e-12));
        if let (Some(r), Some(pr)) = (rel, prev_rel) {
            if r < config.convergence_tol && pr < config.convergence_tol {
                trace.converged = true;
                break;
            }
        }
        prev_rel = rel;
        prev_objective = Some(objective);
    }

    Ok((model, trace))
}

fn validate_config(config: &TrainConfig) -> Result<()> {
    if config.max_epochs == 0 {
        return Err(Error::InvalidParameter {
            name: "max_epochs",
            reason: "must be at least 1".to_string(),
        });
    }
    if !(config.rho0 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "rho0",
            reason: format!("must be positive, got {}", config.rho0),
        });
    }
    if !config.b.is_finite() || config.b < 0.0 {
        return Err(Error::InvalidParameter {
            name: "b",
            reason: format!("margin must be finite and non-negative, got {}", config.b),
        });
    }
    if !(config.convergence_tol >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "convergence_tol",
            reason: format!("must be non-negative, got {}", config.convergence_tol),
        });
    }
    Ok(())
}

pub(crate) fn pick_audit_subset(usable: &[u32], requested: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    if requested == 0 || requested >= usable.len() {
        return usable.to_vec();
    }
    let mut shuffled = usable.to_vec();
    shuffled.shuffle(rng);
    let mut subset = shuffled[..requested].to_vec();
    subset.sort_unstable();
    subset
}
