//! Class priors for training: exact values from ground truth, or estimates
//! from a small revealed-truth subset.

use std::collections::HashSet;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::domain::{ClassPriors, CorpusSplit, Dataset, Label, PseudoLabeling, SampleId, Side};
use crate::error::{Error, Result};
use crate::metrics::measured_priors;
use crate::seeding::{keyed_rng, STREAM_SUBSET};

/// Clamp applied to every estimated prior.
pub const PRIOR_EPS: f64 = 1e-3;

/// Where the few-labeled estimate of `pi_plus` comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PiSource {
    /// Mixture identity over the corpus sizes, see [`derive_pi_plus`].
    #[default]
    Mixture,
    /// Raw positive fraction of the labeled subset.
    SubsetFraction,
}

/// Sample ids whose true labels have been revealed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewLabeledSubset {
    ids: Vec<SampleId>,
}

impl FewLabeledSubset {
    pub fn new(dataset: &Dataset, ids: Vec<SampleId>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(ids.len());
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id));
            }
            dataset.true_label(id)?;
        }
        Ok(Self { ids })
    }

    /// Uniformly draws `size` distinct ids without replacement.
    pub fn sample(dataset: &Dataset, size: usize, seed: u64) -> Result<Self> {
        if size > dataset.len() {
            return Err(Error::invalid(format!(
                "few-labeled subset of {size} exceeds dataset size {}",
                dataset.len()
            )));
        }
        let mut rng = keyed_rng(seed, STREAM_SUBSET, 0);
        let ids = index::sample(&mut rng, dataset.len(), size)
            .into_iter()
            .map(|i| dataset.samples()[i].id)
            .collect();
        Self::new(dataset, ids)
    }

    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }

    pub fn size(&self) -> usize {
        self.ids.len()
    }
}

fn clamp_prior(p: f64) -> f64 {
    p.clamp(PRIOR_EPS, 1.0 - PRIOR_EPS)
}

/// Exact priors of `split` from the hidden truth of `dataset`.
pub fn oracle_priors(dataset: &Dataset, split: &CorpusSplit, gap_floor: f64) -> Result<ClassPriors> {
    let (theta_p, theta_n) = measured_priors(dataset, split)?;
    let mut pos = 0usize;
    for s in dataset.samples() {
        pos += usize::from(s.true_label.ok_or(Error::MissingTruth)?.is_positive());
    }
    let pi_plus = pos as f64 / dataset.len() as f64;
    ClassPriors::with_gap_floor(pi_plus, theta_p, theta_n, gap_floor)
}

/// Conditional positive frequencies of the subset within each pseudo-corpus.
pub fn estimate_priors(
    dataset: &Dataset,
    labeling: &PseudoLabeling,
    subset: &FewLabeledSubset,
    pi_source: PiSource,
    gap_floor: f64,
) -> Result<ClassPriors> {
    // [pseudo-positive, pseudo-negative] x [count, true positives]
    let mut counts = [[0usize; 2]; 2];
    for &id in subset.ids() {
        let truth = dataset.true_label(id)?;
        let side = match labeling.get(id).ok_or(Error::MissingLabel(id))? {
            Label::Positive => 0,
            Label::Negative => 1,
        };
        counts[side][0] += 1;
        counts[side][1] += usize::from(truth.is_positive());
    }
    if counts[0][0] == 0 {
        return Err(Error::InsufficientCoverage(Side::Positive));
    }
    if counts[1][0] == 0 {
        return Err(Error::InsufficientCoverage(Side::Negative));
    }
    let theta_p = clamp_prior(counts[0][1] as f64 / counts[0][0] as f64);
    let theta_n = clamp_prior(counts[1][1] as f64 / counts[1][0] as f64);
    let pi_plus = match pi_source {
        PiSource::Mixture => derive_pi_plus(
            theta_p,
            theta_n,
            labeling.count(Label::Positive),
            labeling.count(Label::Negative),
        ),
        PiSource::SubsetFraction => {
            clamp_prior((counts[0][1] + counts[1][1]) as f64 / subset.size() as f64)
        }
    };
    ClassPriors::with_gap_floor(pi_plus, theta_p, theta_n, gap_floor)
}

/// Positive prior implied by the corpus priors and corpus sizes.
pub fn derive_pi_plus(theta_p: f64, theta_n: f64, n_pos: usize, n_neg: usize) -> f64 {
    let total = (n_pos + n_neg) as f64;
    clamp_prior((theta_p * n_pos as f64 + theta_n * n_neg as f64) / total)
}
