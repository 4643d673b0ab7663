//! Subspace-ensemble training.
//!
//! Builds a set of d-by-D projections (consecutive PCA blocks, random
//! Gaussian maps, or the trivial identity), trains one bilinear model per
//! subspace independently and in parallel while sharing the neighborhood
//! found in the ambient space, and optionally polishes the members jointly
//! by coordinate descent on the ensemble hinge objective.

use std::time::Instant;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dataset::{normalize_rows_in_place, LabeledDataset, PcaTransform};
use crate::error::{Error, Result};
use crate::neighborhood::{NeighborhoodIndex, SymmetricPairSets};
use crate::similarity::{objective_over, EnsembleMember, EnsembleModel, SimilarityModel};
use crate::trainer::{
    apply_update_counted, pick_audit_subset, step_size, train, Sampling, TrainConfig,
    TrainStats, TrainTrace,
};

/// How the subspace projections are constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    /// Disjoint consecutive slices of a fitted PCA basis; rows orthonormal.
    PcaBlocks,
    /// Entries i.i.d. Gaussian with variance 1/d; rows not orthonormal.
    Random,
    /// The identity map; only valid for a single member with d = D.
    Identity,
}

/// The projections shared by an ensemble, plus how they were made.
#[derive(Debug, Clone)]
pub struct ProjectionSet {
    pub kind: ProjectionKind,
    pub seed: u64,
    /// One d-by-D matrix per member.
    pub projections: Vec<Array2<f64>>,
}

impl ProjectionSet {
    pub fn len(&self) -> usize {
        self.projections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projections.is_empty()
    }

    pub fn subspace_dim(&self) -> usize {
        self.projections[0].nrows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.projections[0].ncols()
    }
}

/// Seed for member `n`, spread from the master seed so streams do not
/// overlap; member 0 keeps the master seed itself.
pub fn member_seed(master: u64, member: usize) -> u64 {
    master.wrapping_add((member as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Builds `members` projection matrices of shape `subspace_dim` x
/// `ambient_dim`. PCA blocks slice the basis into disjoint consecutive row
/// ranges and need a fitted transform with at least `members *
/// subspace_dim` directions; random maps need no PCA and draw from the
/// per-member seeded stream.
pub fn make_projections(
    kind: ProjectionKind,
    pca: Option<&PcaTransform>,
    ambient_dim: usize,
    subspace_dim: usize,
    members: usize,
    seed: u64,
) -> Result<ProjectionSet> {
    if members == 0 {
        return Err(Error::InvalidParameter {
            name: "members",
            reason: "ensemble needs at least one member".into(),
        });
    }
    if subspace_dim == 0 || subspace_dim > ambient_dim {
        return Err(Error::InvalidParameter {
            name: "subspace_dim",
            reason: format!("must be in 1..={ambient_dim}, got {subspace_dim}"),
        });
    }

    let projections = match kind {
        ProjectionKind::PcaBlocks => {
            let pca = pca.ok_or(Error::InvalidParameter {
                name: "pca",
                reason: "pca_blocks projections need a fitted transform".into(),
            })?;
            if pca.input_dim() != ambient_dim {
                return Err(Error::DimensionMismatch {
                    context: "pca basis vs ambient space",
                    expected: ambient_dim,
                    got: pca.input_dim(),
                });
            }
            let needed = members * subspace_dim;
            if pca.target_dim() < needed {
                return Err(Error::InvalidParameter {
                    name: "pca",
                    reason: format!(
                        "pca_blocks needs {needed} directions ({members} members x \
                         {subspace_dim} dims), transform holds {}",
                        pca.target_dim()
                    ),
                });
            }
            (0..members)
                .map(|n| {
                    pca.basis
                        .slice(ndarray::s![n * subspace_dim..(n + 1) * subspace_dim, ..])
                        .to_owned()
                })
                .collect()
        }
        ProjectionKind::Random => {
            let std = (1.0 / subspace_dim as f64).sqrt();
            (0..members)
                .map(|n| {
                    let mut rng = ChaCha8Rng::seed_from_u64(member_seed(seed, n));
                    Array2::from_shape_fn((subspace_dim, ambient_dim), |_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * std
                    })
                })
                .collect()
        }
        ProjectionKind::Identity => {
            if members != 1 || subspace_dim != ambient_dim {
                return Err(Error::InvalidParameter {
                    name: "kind",
                    reason: format!(
                        "identity projection needs a single member with \
                         subspace_dim = ambient_dim, got {members} members at \
                         {subspace_dim}/{ambient_dim}"
                    ),
                });
            }
            vec![Array2::eye(ambient_dim)]
        }
    };

    Ok(ProjectionSet {
        kind,
        seed,
        projections,
    })
}

/// Knobs shared by ensemble training and joint refinement.
#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    /// Per-member training configuration; member n trains with its seed
    /// replaced by [`member_seed`]`(base.seed, n)`.
    pub base: TrainConfig,
    /// Rescale projected rows to unit length before training. The margin
    /// assumes unit-scale similarities, so this defaults to on.
    pub renormalize_projected: bool,
    /// SGD epochs each member runs per refinement round.
    pub refine_epochs: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            base: TrainConfig::default(),
            renormalize_projected: true,
            refine_epochs: 2,
        }
    }
}

/// Per-member traces from [`train_members`], plus the refinement trace
/// once [`joint_refine`] has run.
#[derive(Debug, Clone, Default)]
pub struct EnsembleTrainReport {
    pub member_traces: Vec<TrainTrace>,
    pub refinement: Option<RefineTrace>,
}

/// Applies one member's projection to every row and optionally rescales
/// the projected rows to unit length. Identity projections pass features
/// through untouched.
pub fn project_dataset(
    data: &LabeledDataset,
    projection: &Array2<f64>,
    renormalize: bool,
) -> Result<LabeledDataset> {
    if projection.ncols() != data.dim() {
        return Err(Error::DimensionMismatch {
            context: "projection columns vs feature dim",
            expected: data.dim(),
            got: projection.ncols(),
        });
    }
    let is_identity = projection.nrows() == projection.ncols()
        && projection.indexed_iter().all(|((r, c), &v)| {
            if r == c {
                v == 1.0
            } else {
                v == 0.0
            }
        });
    let mut projected = if is_identity {
        data.features().clone()
    } else {
        data.features().dot(&projection.t())
    };
    if renormalize {
        let zeroed = normalize_rows_in_place(&mut projected);
        if !zeroed.is_empty() {
            log::warn!(
                "{} rows projected to zero and stay zero after renormalization",
                zeroed.len()
            );
        }
    }
    let labels = data.original_labels();
    LabeledDataset::new(projected, labels)
}

/// Trains one model per projection, concurrently, all sharing the
/// neighborhood pairs found in the ambient space. Member n runs with seed
/// [`member_seed`]`(config.base.seed, n)`, so results are reproducible and
/// independent of scheduling order.
pub fn train_members(
    data: &LabeledDataset,
    index: &NeighborhoodIndex,
    pairs: &SymmetricPairSets,
    proj: &ProjectionSet,
    config: &EnsembleConfig,
) -> Result<(EnsembleModel, EnsembleTrainReport)> {
    if proj.is_empty() {
        return Err(Error::InvalidParameter {
            name: "proj",
            reason: "projection set is empty".into(),
        });
    }
    if index.len() != data.len() {
        return Err(Error::DimensionMismatch {
            context: "neighborhood index vs dataset",
            expected: data.len(),
            got: index.len(),
        });
    }
    if proj.ambient_dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            context: "projection columns vs feature dim",
            expected: data.dim(),
            got: proj.ambient_dim(),
        });
    }

    let trained: Result<Vec<(EnsembleMember, TrainTrace)>> = proj
        .projections
        .par_iter()
        .enumerate()
        .map(|(n, p)| {
            let run = || -> Result<(EnsembleMember, TrainTrace)> {
                let projected = project_dataset(data, p, config.renormalize_projected)?;
                let mut member_config = config.base.clone();
                member_config.seed = member_seed(config.base.seed, n);
                let (model, trace) = train(&projected, pairs, &member_config)?;
                Ok((
                    EnsembleMember {
                        projection: p.clone(),
                        model,
                    },
                    trace,
                ))
            };
            run().map_err(|e| Error::MemberTraining {
                member: n,
                source: Box::new(e),
            })
        })
        .collect();

    let trained = trained?;
    let (members, traces): (Vec<_>, Vec<_>) = trained.into_iter().unzip();
    let ensemble = EnsembleModel::from_members(members)?;
    Ok((
        ensemble,
        EnsembleTrainReport {
            member_traces: traces,
            refinement: None,
        },
    ))
}

/// One refinement round's audit row.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineRound {
    pub round: usize,
    /// Ensemble hinge objective over the audit anchors after the round.
    pub objective: f64,
    pub updates: u64,
    pub skips: u64,
    pub seconds: f64,
}

/// Audit trail of [`joint_refine`].
#[derive(Debug, Clone, Default)]
pub struct RefineTrace {
    /// Ensemble objective over the audit anchors before any round.
    pub initial_objective: f64,
    pub rounds: Vec<RefineRound>,
    /// True when the last round degraded the objective and was undone.
    pub rolled_back: bool,
    pub stats: TrainStats,
}

/// Coordinate-descent polish: each round sweeps the members in order,
/// running SGD epochs on one member's matrix while the rest stay fixed.
/// Triplets are re-selected against the full ensemble similarity, and the
/// per-member update direction lives in that member's subspace. A round
/// whose audited objective rises by more than the convergence tolerance is
/// undone and refinement stops there.
pub fn joint_refine(
    ens: EnsembleModel,
    data: &LabeledDataset,
    index: &NeighborhoodIndex,
    pairs: &SymmetricPairSets,
    config: &EnsembleConfig,
    rounds: usize,
) -> Result<(EnsembleModel, RefineTrace)> {
    let mut ens = ens;
    if ens.ambient_dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            context: "ensemble ambient dim vs feature dim",
            expected: data.dim(),
            got: ens.ambient_dim(),
        });
    }
    if index.len() != data.len() || pairs.len() != data.len() {
        return Err(Error::DimensionMismatch {
            context: "neighborhood structures vs dataset",
            expected: data.len(),
            got: index.len().min(pairs.len()),
        });
    }
    let usable = pairs.usable_indices();
    if usable.is_empty() {
        return Err(Error::NoUsableSample);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.base.seed);
    let audit = pick_audit_subset(&usable, config.base.audit_subsample, &mut rng);

    // Per-member projected (and optionally renormalized) feature rows.
    let projected: Vec<Array2<f64>> = ens
        .members()
        .iter()
        .map(|m| {
            project_dataset(data, &m.projection, config.renormalize_projected)
                .map(|d| d.features().clone())
        })
        .collect::<Result<_>>()?;

    let b = config.base.b;
    let mut trace = RefineTrace {
        initial_objective: objective_over(&ens, data, pairs, b, &audit),
        ..RefineTrace::default()
    };
    let mut prev = trace.initial_objective;

    for round in 1..=rounds {
        let started = Instant::now();
        let snapshot: Vec<Array2<f64>> =
            ens.members().iter().map(|m| m.model.matrix().clone()).collect();
        let mut updates = 0u64;
        let mut skips = 0u64;

        for n in 0..ens.len() {
            // Scores contributed by every other member, frozen while this
            // member moves: per usable anchor, one value per target pair
            // and one per imposter pair.
            let others: Vec<(Vec<f64>, Vec<f64>)> = usable
                .par_iter()
                .map(|&i| {
                    let i = i as usize;
                    let mut target_sums = vec![0.0; pairs.target_pairs(i).len()];
                    let mut imposter_sums = vec![0.0; pairs.imposter_pairs(i).len()];
                    for (m, member) in ens.members().iter().enumerate() {
                        if m == n {
                            continue;
                        }
                        let zi = projected[m].row(i);
                        let left = member.model.matrix().t().dot(&zi);
                        for (slot, &j) in target_sums.iter_mut().zip(pairs.target_pairs(i)) {
                            *slot += left.dot(&projected[m].row(j as usize));
                        }
                        for (slot, &l) in
                            imposter_sums.iter_mut().zip(pairs.imposter_pairs(i))
                        {
                            *slot += left.dot(&projected[m].row(l as usize));
                        }
                    }
                    (target_sums, imposter_sums)
                })
                .collect();

            let feats = &projected[n];
            let mut t: u64 = 1;
            for _ in 0..config.refine_epochs {
                let mut order: Vec<usize> = (0..usable.len()).collect();
                order.shuffle(&mut rng);
                for &pos in &order {
                    let i = usable[pos] as usize;
                    let (ref other_t, ref other_i) = others[pos];
                    let picked = select_ensemble_triplet(
                        i,
                        &ens.members()[n].model,
                        feats,
                        pairs,
                        other_t,
                        other_i,
                        b,
                        config.base.sampling,
                        &mut rng,
                    );
                    match picked {
                        Some((j, l)) => {
                            let rho = step_size(t, data.len(), config.base.rho0);
                            apply_update_counted(
                                &mut ens.member_mut(n).model,
                                feats.row(i),
                                feats.row(j as usize),
                                feats.row(l as usize),
                                rho,
                                config.base.frob_normalize,
                                &mut trace.stats,
                            );
                            t += 1;
                            updates += 1;
                        }
                        None => skips += 1,
                    }
                }
                if config.base.symmetrize {
                    ens.member_mut(n).model.symmetrize();
                    if config.base.frob_normalize {
                        ens.member_mut(n).model.renormalize();
                    }
                }
            }
        }

        let objective = objective_over(&ens, data, pairs, b, &audit);
        let seconds = started.elapsed().as_secs_f64();
        if objective > prev * (1.0 + config.base.convergence_tol) {
            for (member, saved) in (0..ens.len()).zip(snapshot) {
                *ens.member_mut(member).model.matrix_mut() = saved;
            }
            trace.rounds.push(RefineRound {
                round,
                objective,
                updates,
                skips,
                seconds,
            });
            trace.rolled_back = true;
            break;
        }
        prev = objective;
        trace.rounds.push(RefineRound {
            round,
            objective,
            updates,
            skips,
            seconds,
        });
    }

    trace.stats.updates = trace.rounds.iter().map(|r| r.updates).sum();
    trace.stats.skips = trace.rounds.iter().map(|r| r.skips).sum();
    Ok((ens, trace))
}

/// Triplet selection against the ensemble score: the live member's
/// similarity plus the frozen contribution of everyone else. Mirrors the
/// single-model rules: selective picks the weakest target and strongest
/// imposter, ties go to the lower sample index, and a pick whose hinge is
/// inactive is dropped.
#[allow(clippy::too_many_arguments)]
fn select_ensemble_triplet<R: Rng>(
    anchor: usize,
    model: &SimilarityModel,
    feats: &Array2<f64>,
    pairs: &SymmetricPairSets,
    other_targets: &[f64],
    other_imposters: &[f64],
    b: f64,
    sampling: Sampling,
    rng: &mut R,
) -> Option<(u32, u32)> {
    let targets = pairs.target_pairs(anchor);
    let imposters = pairs.imposter_pairs(anchor);
    if targets.is_empty() || imposters.is_empty() {
        return None;
    }
    let zi = feats.row(anchor);
    let left = model.matrix().t().dot(&zi);
    let score =
        |j: u32, base: f64| -> f64 { left.dot(&feats.row(j as usize)) + base };

    match sampling {
        Sampling::Selective => {
            let mut best_j = targets[0];
            let mut best_j_score = score(targets[0], other_targets[0]);
            for (&j, &base) in targets.iter().zip(other_targets).skip(1) {
                let s = score(j, base);
                if s < best_j_score {
                    best_j = j;
                    best_j_score = s;
                }
            }
            let mut best_l = imposters[0];
            let mut best_l_score = score(imposters[0], other_imposters[0]);
            for (&l, &base) in imposters.iter().zip(other_imposters).skip(1) {
                let s = score(l, base);
                if s > best_l_score {
                    best_l = l;
                    best_l_score = s;
                }
            }
            if b - best_j_score + best_l_score > 0.0 {
                Some((best_j, best_l))
            } else {
                None
            }
        }
        Sampling::Uniform => {
            let tj = rng.random_range(0..targets.len());
            let tl = rng.random_range(0..imposters.len());
            let sj = score(targets[tj], other_targets[tj]);
            let sl = score(imposters[tl], other_imposters[tl]);
            if b - sj + sl > 0.0 {
                Some((targets[tj], imposters[tl]))
            } else {
                None
            }
        }
    }
}

fn squared_norm(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v)
}

/// Squared-distance distortion of one projected pair, |d_proj - d| / d.
pub fn projection_distortion(
    p: &Array2<f64>,
    x: ArrayView1<'_, f64>,
    z: ArrayView1<'_, f64>,
) -> f64 {
    let diff = &x.to_owned() - &z;
    let ambient = squared_norm(diff.view());
    let projected = p.dot(&diff);
    let sub = squared_norm(projected.view());
    (sub - ambient).abs() / ambient
}
