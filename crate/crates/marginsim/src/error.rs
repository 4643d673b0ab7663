//! Error type shared by every module in the crate.

use std::path::PathBuf;

/// Errors produced by dataset handling, file formats, and training.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A file did not match the expected on-disk layout.
    #[error("malformed {format} file {path:?}: {reason}")]
    Format {
        format: &'static str,
        path: PathBuf,
        reason: String,
    },

    /// A CSV row had the wrong number of fields or an unparsable field.
    #[error("bad csv row {row}: {reason}")]
    CsvRow { row: usize, reason: String },

    /// Class labels must be positive integers.
    #[error("invalid class label {label:?} on row {row}")]
    InvalidLabel { row: usize, label: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A configuration value failed a precondition.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// No sample has both a target pair and an imposter pair.
    #[error("no usable sample: every sample lacks a target pair or an imposter pair")]
    NoUsableSample,

    /// An ensemble member failed to train.
    #[error("training member {member} failed: {source}")]
    MemberTraining {
        member: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
