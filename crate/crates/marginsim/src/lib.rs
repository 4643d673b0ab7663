//! Large-margin bilinear similarity learning over k-NN neighborhoods.
//!
//! The crate trains a similarity function s(x, z) = x' M z so that each
//! sample scores higher against neighbors of its own class than against
//! neighbors of other classes, by a fixed margin. Two trainers are provided:
//!
//! * single full-dimensional model, stochastic subgradient steps over
//!   selectively sampled violating triplets ([`trainer`]);
//! * an ensemble of independently trained low-dimensional subspace models
//!   whose scores add, with optional joint refinement ([`ensemble`]).
//!
//! Classification is soft-voting k-NN: Euclidean neighbors vote with their
//! learned similarity as the weight ([`classifier`]).
//!
//! Every capability has a runnable demo under `examples/`:
//!
//! ```text
//! cargo run --release --example train_basic          single-model pipeline end to end
//! cargo run --release --example sampling_strategies  selective vs uniform triplet sampling
//! cargo run --release --example subspace_ensemble    accuracy vs ensemble size
//! cargo run --release --example joint_refinement     coordinate-descent refinement
//! cargo run --release --example precision_recall     ranked-retrieval curves
//! cargo run --release --example file_pipeline        on-disk formats and the CLI stages
//! ```
//!
//! The `marginsim` binary exposes the same pipeline as subcommands
//! (`synth`, `preprocess`, `neighbors`, `train-slne`, `train-slde`,
//! `refine`, `predict`, `eval`).

pub mod classifier;
pub mod dataset;
mod error;
pub mod ensemble;
pub mod io;
pub mod neighborhood;
pub mod similarity;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
