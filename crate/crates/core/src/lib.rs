//! Iterative pseudo-label refinement for binary classification.
//!
//! A noisy initial labeling splits an unlabeled corpus into a pseudo-positive
//! and a pseudo-negative corpus. A scorer is trained on the two corpora with a
//! robust unlabeled-unlabeled (UU) risk, the whole corpus is re-labeled by the
//! sign of the scorer, and the cycle repeats.
//!
//! Module map:
//!
//! - [`domain`]: samples, datasets, labelings, corpus splits, priors
//! - [`risk`]: pointwise losses, the PN / UU / robust UU estimators and their gradients
//! - [`model`]: the scorer and its minibatch trainer
//! - [`priors`]: oracle and few-labeled class-prior computation
//! - [`annotate`]: simulated initial annotator and labeling import
//! - [`pipeline`]: the multi-iteration, multi-seed refinement loop
//! - [`data`]: synthetic generators and the CSV / JSON file formats
//! - [`metrics`]: accuracy and measured corpus priors
//! - [`cli`]: the `uu-refine` command-line surface

pub mod annotate;
pub mod cli;
pub mod data;
pub mod domain;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod priors;
pub mod risk;
mod seeding;

pub use domain::{
    ClassPriors, CorpusSplit, Dataset, Label, LossKind, PseudoLabeling, Sample, SampleId, Side,
    UUCoefficients, DEFAULT_PRIOR_GAP_FLOOR,
};
pub use error::{Error, Result};
