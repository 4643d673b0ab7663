//! Pipeline driver: generate or ingest data, preprocess, build
//! neighborhoods, train a single model or a subspace ensemble, refine,
//! predict, and evaluate.
//!
//! Every subcommand reads defaults from an optional `key=value` config
//! file (`--config`); explicit flags win over file entries. One master
//! seed drives all randomness and is echoed as a `# seed=` comment in
//! every CSV the pipeline writes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::ArrayView1;

use marginsim::classifier::{
    euclidean_knn_baseline, precision_recall, predict_all, top_n_accuracy,
};
use marginsim::dataset::{apply_preprocessing, fit_pca, LabeledDataset, PcaConfig};
use marginsim::ensemble::{
    joint_refine, make_projections, train_members, EnsembleConfig, ProjectionKind,
};
use marginsim::io;
use marginsim::neighborhood::{build_index, symmetrize, NeighborhoodIndex};
use marginsim::similarity::{EnsembleModel, SimilarityMeasure, SimilarityModel};
use marginsim::synth::{fine_grained_four_class, two_class_gaussians, FineGrainedConfig};
use marginsim::trainer::{train, Sampling, TrainConfig};
use marginsim::{Error, Result};

#[derive(Parser)]
#[command(name = "marginsim", version, about = "Large-margin bilinear similarity learning")]
struct Cli {
    /// key=value defaults; explicit flags override file entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset.
    Synth(SynthArgs),
    /// Fit PCA, project, and length-normalize a dataset.
    Preprocess(PreprocessArgs),
    /// Build the exact k-nearest-neighbor index.
    Neighbors(NeighborsArgs),
    /// Train a single bilinear model.
    TrainSlne(TrainSlneArgs),
    /// Train a subspace ensemble, optionally with joint refinement.
    TrainSlde(TrainSldeArgs),
    /// Jointly refine an already-trained ensemble.
    Refine(RefineArgs),
    /// Classify a test set with a trained model.
    Predict(PredictArgs),
    /// Score a model: accuracies, per-sample report, precision-recall.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    /// Four classes in two coarse groups split by a fine direction.
    FourClass,
    /// Two Gaussian blobs separated along the first axis.
    TwoClass,
}

#[derive(Clone, Copy, ValueEnum)]
enum FileFormat {
    Binary,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplingArg {
    Selective,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProjectionArg {
    PcaBlocks,
    Random,
    Identity,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: Option<SynthKind>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    train_per_class: Option<usize>,
    #[arg(long)]
    test_per_class: Option<usize>,
    /// Distance between the two coarse class groups (four-class kind).
    #[arg(long)]
    coarse_sep: Option<f64>,
    /// Distance between the two classes inside a coarse group.
    #[arg(long)]
    fine_sep: Option<f64>,
    /// Center distance for the two-class kind.
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<FileFormat>,
    #[arg(long)]
    train_out: PathBuf,
    /// Four-class runs always have a test split; two-class runs draw one
    /// from seed+1 when this is given.
    #[arg(long)]
    test_out: Option<PathBuf>,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    target_dim: Option<usize>,
    /// Row budget for covariance estimation on wide inputs.
    #[arg(long)]
    row_subset: Option<usize>,
    /// Widest input still eigendecomposed from all rows.
    #[arg(long)]
    exact_dim_limit: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Reuse a fitted transform instead of fitting one here.
    #[arg(long)]
    pca: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    pca_out: Option<PathBuf>,
}

#[derive(Args)]
struct NeighborsArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainCommonArgs {
    #[arg(long)]
    input: PathBuf,
    /// Precomputed neighborhood file; must match the input's row count.
    #[arg(long)]
    neighbors: PathBuf,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    rho0: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    sampling: Option<SamplingArg>,
    /// Symmetrize the model at every epoch end.
    #[arg(long)]
    symmetrize: bool,
    /// Skip the per-update Frobenius renormalization.
    #[arg(long)]
    no_frob_normalize: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Anchors audited for the per-epoch objective; 0 audits all.
    #[arg(long)]
    audit_subsample: Option<usize>,
}

#[derive(Args)]
struct TrainSlneArgs {
    #[command(flatten)]
    common: TrainCommonArgs,
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainSldeArgs {
    #[command(flatten)]
    common: TrainCommonArgs,
    #[arg(long)]
    members: Option<usize>,
    #[arg(long)]
    subspace_dim: Option<usize>,
    #[arg(long, value_enum)]
    projection: Option<ProjectionArg>,
    /// Fitted transform for pca-blocks; fitted here from the input when
    /// absent.
    #[arg(long)]
    pca: Option<PathBuf>,
    /// Keep projected rows at their raw scale instead of unit length.
    #[arg(long)]
    no_renormalize_projected: bool,
    /// Coordinate-descent rounds after independent member training.
    #[arg(long)]
    joint_rounds: Option<usize>,
    /// SGD epochs per member inside each refinement round.
    #[arg(long)]
    refine_epochs: Option<usize>,
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long)]
    refine_out: Option<PathBuf>,
}

#[derive(Args)]
struct RefineArgs {
    #[command(flatten)]
    common: TrainCommonArgs,
    /// Ensemble to refine.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    refine_epochs: Option<usize>,
    #[arg(long)]
    no_renormalize_projected: bool,
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long)]
    refine_out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    k_vote: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    k_vote: Option<usize>,
    #[arg(long)]
    max_rank: Option<usize>,
    /// Also score the unweighted Euclidean majority vote.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    report_out: Option<PathBuf>,
    #[arg(long)]
    pr_out: Option<PathBuf>,
}

/// key=value defaults; `#` comments and blank lines ignored.
struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)?;
            for (line_no, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    return Err(Error::InvalidParameter {
                        name: "config",
                        reason: format!("line {}: expected key=value", line_no + 1),
                    });
                };
                entries.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Self { entries })
    }

    fn get<T: FromStr>(&self, key: &'static str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| Error::InvalidParameter {
                name: key,
                reason: format!("config value {raw:?} does not parse"),
            }),
        }
    }

    /// Flag wins, then the config entry, then the built-in default.
    fn resolve<T: FromStr>(&self, flag: Option<T>, key: &'static str, default: T) -> Result<T> {
        Ok(flag.or(self.get(key)?).unwrap_or(default))
    }

    /// For switches that default off: the flag can only turn them on.
    fn resolve_on(&self, flag: bool, key: &'static str) -> Result<bool> {
        Ok(flag || self.get(key)?.unwrap_or(false))
    }

    /// For switches that default on: the flag can only turn them off.
    fn resolve_off(&self, off_flag: bool, key: &'static str) -> Result<bool> {
        Ok(!off_flag && self.get(key)?.unwrap_or(true))
    }
}

impl FromStr for SynthKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "four-class" => Ok(Self::FourClass),
            "two-class" => Ok(Self::TwoClass),
            other => Err(format!("unknown synth kind {other:?}")),
        }
    }
}

impl FromStr for FileFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "binary" => Ok(Self::Binary),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

impl FromStr for SamplingArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "selective" => Ok(Self::Selective),
            "uniform" => Ok(Self::Uniform),
            other => Err(format!("unknown sampling {other:?}")),
        }
    }
}

impl FromStr for ProjectionArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pca-blocks" => Ok(Self::PcaBlocks),
            "random" => Ok(Self::Random),
            "identity" => Ok(Self::Identity),
            other => Err(format!("unknown projection {other:?}")),
        }
    }
}

impl From<SamplingArg> for Sampling {
    fn from(v: SamplingArg) -> Self {
        match v {
            SamplingArg::Selective => Sampling::Selective,
            SamplingArg::Uniform => Sampling::Uniform,
        }
    }
}

impl From<ProjectionArg> for ProjectionKind {
    fn from(v: ProjectionArg) -> Self {
        match v {
            ProjectionArg::PcaBlocks => ProjectionKind::PcaBlocks,
            ProjectionArg::Random => ProjectionKind::Random,
            ProjectionArg::Identity => ProjectionKind::Identity,
        }
    }
}

/// A model file holds either a single matrix or an ensemble; both serve
/// predictions through the same scoring interface.
enum ServedModel {
    Plain(SimilarityModel),
    Ensemble(EnsembleModel),
}

impl SimilarityMeasure for ServedModel {
    fn ambient_dim(&self) -> usize {
        match self {
            Self::Plain(m) => m.ambient_dim(),
            Self::Ensemble(e) => e.ambient_dim(),
        }
    }

    fn score(&self, x: ArrayView1<'_, f64>, z: ArrayView1<'_, f64>) -> f64 {
        match self {
            Self::Plain(m) => m.score(x, z),
            Self::Ensemble(e) => e.score(x, z),
        }
    }
}

fn file_magic(path: &Path) -> Result<[u8; 4]> {
    let mut magic = [0u8; 4];
    let mut f = File::open(path)?;
    let n = f.read(&mut magic)?;
    if n < 4 {
        magic[n..].fill(0);
    }
    Ok(magic)
}

/// Datasets load as binary when the magic matches, as CSV otherwise.
fn load_dataset_auto(path: &Path) -> Result<LabeledDataset> {
    if &file_magic(path)? == b"MSF1" {
        io::read_features(path)
    } else {
        io::read_dataset_csv(path)
    }
}

fn load_model_auto(path: &Path) -> Result<ServedModel> {
    match &file_magic(path)? {
        b"MSM1" => io::read_model(path).map(ServedModel::Plain),
        b"MSE1" => io::read_ensemble(path).map(ServedModel::Ensemble),
        other => Err(Error::Format {
            format: "MSM1/MSE1",
            path: path.to_path_buf(),
            reason: format!("unrecognized magic {:?}", String::from_utf8_lossy(other)),
        }),
    }
}

fn write_dataset(path: &Path, data: &LabeledDataset, format: FileFormat, seed: u64) -> Result<()> {
    match format {
        FileFormat::Binary => io::write_features(path, data),
        FileFormat::Csv => io::write_dataset_csv(path, data, Some(seed)),
    }
}

/// Builds the shared trainer configuration from flags and config file.
fn resolve_train_config(args: &TrainCommonArgs, cfg: &ConfigFile) -> Result<TrainConfig> {
    let defaults = TrainConfig::default();
    Ok(TrainConfig {
        b: cfg.resolve(args.b, "b", defaults.b)?,
        rho0: cfg.resolve(args.rho0, "rho0", defaults.rho0)?,
        max_epochs: cfg.resolve(args.max_epochs, "max-epochs", defaults.max_epochs)?,
        convergence_tol: cfg.resolve(args.tol, "tol", defaults.convergence_tol)?,
        sampling: cfg
            .resolve(args.sampling, "sampling", SamplingArg::Selective)?
            .into(),
        symmetrize: cfg.resolve_on(args.symmetrize, "symmetrize")?,
        frob_normalize: cfg.resolve_off(args.no_frob_normalize, "frob-normalize")?,
        seed: cfg.resolve(args.seed, "seed", defaults.seed)?,
        audit_subsample: cfg.resolve(
            args.audit_subsample,
            "audit-subsample",
            defaults.audit_subsample,
        )?,
    })
}

fn load_training_inputs(
    args: &TrainCommonArgs,
) -> Result<(LabeledDataset, NeighborhoodIndex)> {
    let data = load_dataset_auto(&args.input)?;
    let index = io::read_neighborhoods(&args.neighbors, data.labels())?;
    Ok((data, index))
}

fn cmd_synth(args: SynthArgs, cfg: &ConfigFile) -> Result<()> {
    let seed = cfg.resolve(args.seed, "seed", 0)?;
    let format = cfg.resolve(args.format, "format", FileFormat::Binary)?;
    let kind = cfg.resolve(args.kind, "kind", SynthKind::FourClass)?;
    match kind {
        SynthKind::FourClass => {
            let defaults = FineGrainedConfig::default();
            let config = FineGrainedConfig {
                dim: cfg.resolve(args.dim, "dim", defaults.dim)?,
                train_per_class: cfg.resolve(
                    args.train_per_class,
                    "train-per-class",
                    defaults.train_per_class,
                )?,
                test_per_class: cfg.resolve(
                    args.test_per_class,
                    "test-per-class",
                    defaults.test_per_class,
                )?,
                coarse_sep: cfg.resolve(args.coarse_sep, "coarse-sep", defaults.coarse_sep)?,
                fine_sep: cfg.resolve(args.fine_sep, "fine-sep", defaults.fine_sep)?,
                noise: cfg.resolve(args.noise, "noise", defaults.noise)?,
                seed,
            };
            let (train_set, test_set) = fine_grained_four_class(&config)?;
            write_dataset(&args.train_out, &train_set, format, seed)?;
            if let Some(test_out) = &args.test_out {
                write_dataset(test_out, &test_set, format, seed)?;
            }
            println!(
                "wrote {} train and {} test samples in {} dims across 4 classes",
                train_set.len(),
                test_set.len(),
                train_set.dim()
            );
        }
        SynthKind::TwoClass => {
            let per_class = cfg.resolve(args.train_per_class, "train-per-class", 100)?;
            let dim = cfg.resolve(args.dim, "dim", 50)?;
            let separation = cfg.resolve(args.separation, "separation", 4.0)?;
            let noise = cfg.resolve(args.noise, "noise", 1.0)?;
            let train_set = two_class_gaussians(per_class, dim, separation, noise, seed)?;
            write_dataset(&args.train_out, &train_set, format, seed)?;
            println!(
                "wrote {} samples in {} dims across 2 classes",
                train_set.len(),
                train_set.dim()
            );
            if let Some(test_out) = &args.test_out {
                let test_per = cfg.resolve(args.test_per_class, "test-per-class", per_class)?;
                let test_set = two_class_gaussians(
                    test_per,
                    dim,
                    separation,
                    noise,
                    seed.wrapping_add(1),
                )?;
                write_dataset(test_out, &test_set, format, seed)?;
                println!("wrote {} test samples", test_set.len());
            }
        }
    }
    Ok(())
}

fn cmd_preprocess(args: PreprocessArgs, cfg: &ConfigFile) -> Result<()> {
    let data = load_dataset_auto(&args.input)?;
    let pca = match &args.pca {
        Some(path) => io::read_pca(path)?,
        None => {
            let target_dim = cfg
                .resolve(args.target_dim, "target-dim", 0)?;
            if target_dim == 0 {
                return Err(Error::InvalidParameter {
                    name: "target-dim",
                    reason: "required unless --pca provides a fitted transform".into(),
                });
            }
            let defaults = PcaConfig::default();
            let pca_config = PcaConfig {
                row_subset: cfg.resolve(args.row_subset, "row-subset", defaults.row_subset)?,
                exact_dim_limit: cfg.resolve(
                    args.exact_dim_limit,
                    "exact-dim-limit",
                    defaults.exact_dim_limit,
                )?,
                seed: cfg.resolve(args.seed, "seed", defaults.seed)?,
            };
            fit_pca(&data, target_dim, &pca_config)?
        }
    };
    let (processed, report) = apply_preprocessing(&data, &pca)?;
    let processed = if report.zero_rows.is_empty() {
        processed
    } else {
        log::warn!(
            "dropping {} rows that projected to zero: {:?}",
            report.zero_rows.len(),
            report.zero_rows
        );
        processed.without_rows(&report.zero_rows)?
    };
    io::write_features(&args.out, &processed)?;
    if let Some(pca_out) = &args.pca_out {
        io::write_pca(pca_out, &pca)?;
    }
    println!(
        "preprocessed {} samples: {} -> {} dims",
        processed.len(),
        pca.input_dim(),
        pca.target_dim()
    );
    Ok(())
}

fn cmd_neighbors(args: NeighborsArgs, cfg: &ConfigFile) -> Result<()> {
    let data = load_dataset_auto(&args.input)?;
    let k = cfg.resolve(args.k, "k", 10)?;
    let index = build_index(&data, k)?;
    io::write_neighborhoods(&args.out, &index)?;
    let pairs = symmetrize(&index);
    let usable = pairs.usable_indices().len();
    println!(
        "indexed {} samples at k={}; {} have both target and imposter pairs",
        index.len(),
        index.k(),
        usable
    );
    Ok(())
}

fn cmd_train_slne(args: TrainSlneArgs, cfg: &ConfigFile) -> Result<()> {
    let config = resolve_train_config(&args.common, cfg)?;
    let (data, index) = load_training_inputs(&args.common)?;
    let pairs = symmetrize(&index);
    let (model, trace) = train(&data, &pairs, &config)?;
    io::write_model(&args.model_out, &model)?;
    if let Some(trace_out) = &args.trace_out {
        io::write_trace_csv(trace_out, &trace, config.seed)?;
    }
    let last = trace.epochs.last().expect("training runs at least one epoch");
    println!(
        "trained {} epochs ({}), objective {:.6}, {} updates",
        trace.epochs.len(),
        if trace.converged { "converged" } else { "epoch limit" },
        last.objective,
        trace.stats.updates
    );
    Ok(())
}

fn cmd_train_slde(args: TrainSldeArgs, cfg: &ConfigFile) -> Result<()> {
    let base = resolve_train_config(&args.common, cfg)?;
    let (data, index) = load_training_inputs(&args.common)?;
    let pairs = symmetrize(&index);

    let members = cfg.resolve(args.members, "members", 1)?;
    let kind: ProjectionKind = cfg
        .resolve(args.projection, "projection", ProjectionArg::PcaBlocks)?
        .into();
    let subspace_dim = match kind {
        ProjectionKind::Identity => {
            cfg.resolve(args.subspace_dim, "subspace-dim", data.dim())?
        }
        _ => {
            let d = cfg.resolve(args.subspace_dim, "subspace-dim", 0)?;
            if d == 0 {
                return Err(Error::InvalidParameter {
                    name: "subspace-dim",
                    reason: "required for pca-blocks and random projections".into(),
                });
            }
            d
        }
    };

    let pca = match kind {
        ProjectionKind::PcaBlocks => Some(match &args.pca {
            Some(path) => io::read_pca(path)?,
            None => fit_pca(
                &data,
                members * subspace_dim,
                &PcaConfig {
                    seed: base.seed,
                    ..PcaConfig::default()
                },
            )?,
        }),
        _ => None,
    };
    let projections =
        make_projections(kind, pca.as_ref(), data.dim(), subspace_dim, members, base.seed)?;

    let config = EnsembleConfig {
        base,
        renormalize_projected: cfg.resolve_off(
            args.no_renormalize_projected,
            "renormalize-projected",
        )?,
        refine_epochs: cfg.resolve(args.refine_epochs, "refine-epochs", 2)?,
    };
    let (ensemble, mut report) = train_members(&data, &index, &pairs, &projections, &config)?;
    println!(
        "trained {} members at d={} ({} kind)",
        ensemble.len(),
        ensemble.subspace_dim(),
        match kind {
            ProjectionKind::PcaBlocks => "pca-blocks",
            ProjectionKind::Random => "random",
            ProjectionKind::Identity => "identity",
        }
    );

    let rounds = cfg.resolve(args.joint_rounds, "joint-rounds", 0)?;
    let ensemble = if rounds > 0 {
        let (refined, refine_trace) =
            joint_refine(ensemble, &data, &index, &pairs, &config, rounds)?;
        println!(
            "refined {} rounds: objective {:.6} -> {:.6}{}",
            refine_trace.rounds.len(),
            refine_trace.initial_objective,
            refine_trace
                .rounds
                .last()
                .map_or(refine_trace.initial_objective, |r| r.objective),
            if refine_trace.rolled_back {
                " (last round rolled back)"
            } else {
                ""
            }
        );
        if let Some(refine_out) = &args.refine_out {
            io::write_refine_csv(refine_out, &refine_trace, config.base.seed)?;
        }
        report.refinement = Some(refine_trace);
        refined
    } else {
        ensemble
    };

    io::write_ensemble(&args.model_out, &ensemble)?;
    if let Some(trace_out) = &args.trace_out {
        io::write_member_traces_csv(trace_out, &report.member_traces, config.base.seed)?;
    }
    Ok(())
}

fn cmd_refine(args: RefineArgs, cfg: &ConfigFile) -> Result<()> {
    let base = resolve_train_config(&args.common, cfg)?;
    let (data, index) = load_training_inputs(&args.common)?;
    let pairs = symmetrize(&index);
    let ensemble = io::read_ensemble(&args.model)?;
    let config = EnsembleConfig {
        base,
        renormalize_projected: cfg.resolve_off(
            args.no_renormalize_projected,
            "renormalize-projected",
        )?,
        refine_epochs: cfg.resolve(args.refine_epochs, "refine-epochs", 2)?,
    };
    let rounds = cfg.resolve(args.rounds, "rounds", 1)?;
    let (refined, trace) = joint_refine(ensemble, &data, &index, &pairs, &config, rounds)?;
    io::write_ensemble(&args.model_out, &refined)?;
    if let Some(refine_out) = &args.refine_out {
        io::write_refine_csv(refine_out, &trace, config.base.seed)?;
    }
    println!(
        "refined {} rounds: objective {:.6} -> {:.6}{}",
        trace.rounds.len(),
        trace.initial_objective,
        trace
            .rounds
            .last()
            .map_or(trace.initial_objective, |r| r.objective),
        if trace.rolled_back {
            " (last round rolled back)"
        } else {
            ""
        }
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs, cfg: &ConfigFile) -> Result<()> {
    let model = load_model_auto(&args.model)?;
    let train_set = load_dataset_auto(&args.train)?;
    let test_set = load_dataset_auto(&args.test)?;
    check_dims(&model, &train_set, &test_set)?;
    let k_vote = cfg.resolve(args.k_vote, "k-vote", 10)?;
    validate_k_vote(k_vote, train_set.len())?;
    let seed = cfg.resolve(args.seed, "seed", 0)?;
    let predictions = predict_all(&test_set, &train_set, &model, k_vote);
    io::write_eval_csv(
        &args.out,
        &predictions,
        &test_set.original_labels(),
        &[],
        seed,
    )?;
    println!("predicted {} samples with k_vote={}", predictions.len(), k_vote);
    Ok(())
}

fn cmd_eval(args: EvalArgs, cfg: &ConfigFile) -> Result<()> {
    let model = load_model_auto(&args.model)?;
    let train_set = load_dataset_auto(&args.train)?;
    let test_set = load_dataset_auto(&args.test)?;
    check_dims(&model, &train_set, &test_set)?;
    let k_vote = cfg.resolve(args.k_vote, "k-vote", 10)?;
    validate_k_vote(k_vote, train_set.len())?;
    let seed = cfg.resolve(args.seed, "seed", 0)?;
    let truth = test_set.original_labels();

    let predictions = predict_all(&test_set, &train_set, &model, k_vote);
    let top1 = top_n_accuracy(&predictions, &truth, 1);
    let top3 = top_n_accuracy(&predictions, &truth, 3);
    println!("learned   top-1 accuracy: {top1:.4}");
    println!("learned   top-3 accuracy: {top3:.4}");

    if cfg.resolve_on(args.baseline, "baseline")? {
        let baseline = euclidean_knn_baseline(&test_set, &train_set, k_vote);
        let b1 = top_n_accuracy(&baseline, &truth, 1);
        let b3 = top_n_accuracy(&baseline, &truth, 3);
        println!("euclidean top-1 accuracy: {b1:.4}");
        println!("euclidean top-3 accuracy: {b3:.4}");
    }

    if let Some(report_out) = &args.report_out {
        io::write_eval_csv(report_out, &predictions, &truth, &[1, 3], seed)?;
    }
    if let Some(pr_out) = &args.pr_out {
        let max_rank = cfg.resolve(args.max_rank, "max-rank", k_vote)?;
        if max_rank > train_set.len() {
            return Err(Error::InvalidParameter {
                name: "max-rank",
                reason: format!("exceeds training size {}", train_set.len()),
            });
        }
        let curve = precision_recall(&test_set, &train_set, &model, k_vote, max_rank);
        io::write_pr_csv(pr_out, &curve, seed)?;
    }
    Ok(())
}

fn check_dims(
    model: &ServedModel,
    train_set: &LabeledDataset,
    test_set: &LabeledDataset,
) -> Result<()> {
    if model.ambient_dim() != train_set.dim() {
        return Err(Error::DimensionMismatch {
            context: "model vs training features",
            expected: train_set.dim(),
            got: model.ambient_dim(),
        });
    }
    if train_set.dim() != test_set.dim() {
        return Err(Error::DimensionMismatch {
            context: "training vs test features",
            expected: train_set.dim(),
            got: test_set.dim(),
        });
    }
    Ok(())
}

fn validate_k_vote(k_vote: usize, train_len: usize) -> Result<()> {
    if k_vote == 0 || k_vote > train_len {
        return Err(Error::InvalidParameter {
            name: "k-vote",
            reason: format!("must be in 1..={train_len}, got {k_vote}"),
        });
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    let jobs = cfg.resolve(cli.jobs, "jobs", 0)?;
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::InvalidParameter {
                name: "jobs",
                reason: e.to_string(),
            })?;
    }
    match cli.command {
        Command::Synth(args) => cmd_synth(args, &cfg),
        Command::Preprocess(args) => cmd_preprocess(args, &cfg),
        Command::Neighbors(args) => cmd_neighbors(args, &cfg),
        Command::TrainSlne(args) => cmd_train_slne(args, &cfg),
        Command::TrainSlde(args) => cmd_train_slde(args, &cfg),
        Command::Refine(args) => cmd_refine(args, &cfg),
        Command::Predict(args) => cmd_predict(args, &cfg),
        Command::Eval(args) => cmd_eval(args, &cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
