use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("csv error in {path}: {reason}")]
    Csv { path: PathBuf, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("duplicate record ({subject_id}, {ear})")]
    DuplicateRecord { subject_id: String, ear: String },

    #[error("sample rate mismatch: dataset declares {expected} Hz, record {subject_id} has {found} Hz")]
    SampleRateMismatch {
        expected: f64,
        found: f64,
        subject_id: String,
    },

    #[error("record ({subject_id}, {ear}) has no extracted N1 label; run extraction first")]
    MissingLabel { subject_id: String, ear: String },

    #[error("record ({subject_id}, {ear}) has no anthropometry")]
    MissingAnthropometry { subject_id: String, ear: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("HRIR is all zeros; no peak to center the window on")]
    NoPeak,

    #[error("keypoint index {index} out of bounds for {len} keypoints (feature {feature})")]
    KeypointIndex {
        feature: &'static str,
        index: usize,
        len: usize,
    },

    #[error("keypoints for feature {feature} coincide (zero distance)")]
    ZeroDistance { feature: &'static str },

    #[error("feature {feature} is constant over the training set; cannot normalize")]
    DegenerateFeature { feature: &'static str },

    #[error("normal equations are singular; use ridge > 0")]
    Singular,

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("validation set is empty")]
    EmptyValidation,

    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),

    #[error("infeasible sizes: {0}")]
    InfeasibleSizes(String),

    #[error("feature spaces differ between source and target: {0}")]
    FeatureMismatch(String),

    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),

    #[error("non-positive frequency {0} Hz")]
    NonPositiveFrequency(f64),

    #[error("infeasible delay of {tau} samples: {reason}")]
    InfeasibleDelay { tau: f64, reason: &'static str },

    #[error("run with seed {seed} failed: {source}")]
    RunFailed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn manifest(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Manifest {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code: 1 for configuration errors, 2 for data errors,
    /// 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Singular
            | Error::Divergence { .. }
            | Error::DegenerateFeature { .. }
            | Error::NonPositiveFrequency(_) => 3,
            Error::RunFailed { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
