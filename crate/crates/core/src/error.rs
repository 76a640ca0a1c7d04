use std::path::PathBuf;

use thiserror::Error;

use crate::domain::{SampleId, Side};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("duplicate sample id {0}")]
    DuplicateId(SampleId),
    #[error("sample {id} has {found} features, expected {expected}")]
    DimensionMismatch {
        id: SampleId,
        expected: usize,
        found: usize,
    },
    #[error("sample {0} has a non-finite feature value")]
    NonFiniteFeature(SampleId),
    #[error("dataset mixes samples with and without true labels")]
    MixedTruth,
    #[error("operation requires true labels but the dataset carries none")]
    MissingTruth,
    #[error("labeling is missing sample id {0}")]
    MissingLabel(SampleId),
    #[error("sample id {0} is not part of the dataset")]
    UnknownId(SampleId),
    #[error("invalid label value {0:?}, expected 1 or -1")]
    InvalidLabel(String),
    #[error("degenerate split: the pseudo-{0} corpus is empty")]
    DegenerateSplit(Side),
    #[error("pseudo-{side} corpus has {size} samples, at least 2 are required")]
    CorpusTooSmall { side: Side, size: usize },
    #[error("the pseudo-{0} corpus is empty")]
    EmptyCorpus(Side),
    #[error("degenerate priors: theta_p={theta_p} theta_n={theta_n}, gap below floor {floor}")]
    DegeneratePriors {
        theta_p: f64,
        theta_n: f64,
        floor: f64,
    },
    #[error("few-labeled subset has no samples in the pseudo-{0} corpus")]
    InsufficientCoverage(Side),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{}:{line}: {message}", path.display())]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// True for failures caused by the numbers rather than by malformed input.
    pub fn is_runtime(&self) -> bool {
        matches!(
            self,
            Error::DegenerateSplit(_)
                | Error::CorpusTooSmall { .. }
                | Error::EmptyCorpus(_)
                | Error::DegeneratePriors { .. }
                | Error::InsufficientCoverage(_)
                | Error::Diverged { .. }
                | Error::Io { .. }
        )
    }
}
