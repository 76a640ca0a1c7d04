//! Accuracy and measured corpus priors against ground truth.

use serde::Serialize;

use crate::domain::{CorpusSplit, Dataset, Label, PseudoLabeling, Side};
use crate::error::{Error, Result};
use crate::model::LinearScorer;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    /// Counts over every sample of `dataset`, which must carry truth.
    pub fn from_labeling(dataset: &Dataset, labeling: &PseudoLabeling) -> Result<Self> {
        let mut c = Confusion::default();
        for s in dataset.samples() {
            let truth = s.true_label.ok_or(Error::MissingTruth)?;
            let pred = labeling.get(s.id).ok_or(Error::MissingLabel(s.id))?;
            c.record(pred, truth);
        }
        Ok(c)
    }

    pub fn from_scorer(dataset: &Dataset, scorer: &LinearScorer) -> Result<Self> {
        let mut c = Confusion::default();
        for s in dataset.samples() {
            let truth = s.true_label.ok_or(Error::MissingTruth)?;
            c.record(Label::from_score(scorer.score(&s.features)?), truth);
        }
        Ok(c)
    }

    fn record(&mut self, pred: Label, truth: Label) {
        match (pred, truth) {
            (Label::Positive, Label::Positive) => self.tp += 1,
            (Label::Positive, Label::Negative) => self.fp += 1,
            (Label::Negative, Label::Negative) => self.tn += 1,
            (Label::Negative, Label::Positive) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> Result<f64> {
        if self.total() == 0 {
            return Err(Error::invalid("accuracy of an empty evaluation set"));
        }
        Ok((self.tp + self.tn) as f64 / self.total() as f64)
    }
}

pub fn accuracy(dataset: &Dataset, labeling: &PseudoLabeling) -> Result<f64> {
    Confusion::from_labeling(dataset, labeling)?.accuracy()
}

pub fn scorer_accuracy(dataset: &Dataset, scorer: &LinearScorer) -> Result<f64> {
    Confusion::from_scorer(dataset, scorer)?.accuracy()
}

/// True-positive fraction of each side of `split`, with no prior validation,
/// so degenerate values stay observable.
pub fn measured_priors(dataset: &Dataset, split: &CorpusSplit) -> Result<(f64, f64)> {
    let fraction = |side: Side| -> Result<f64> {
        let ids = split.corpus(side);
        if ids.is_empty() {
            return Err(Error::EmptyCorpus(side));
        }
        let mut pos = 0usize;
        for &id in ids {
            if dataset.true_label(id)?.is_positive() {
                pos += 1;
            }
        }
        Ok(pos as f64 / ids.len() as f64)
    };
    Ok((fraction(Side::Positive)?, fraction(Side::Negative)?))
}

/// Like [`measured_priors`] but straight from a labeling; a side with no
/// samples gives `None`.
pub fn measured_priors_of_labeling(
    dataset: &Dataset,
    labeling: &PseudoLabeling,
) -> Result<(Option<f64>, Option<f64>)> {
    let (mut n, mut pos) = ([0usize; 2], [0usize; 2]);
    for s in dataset.samples() {
        let truth = s.true_label.ok_or(Error::MissingTruth)?;
        let k = match labeling.get(s.id).ok_or(Error::MissingLabel(s.id))? {
            Label::Positive => 0,
            Label::Negative => 1,
        };
        n[k] += 1;
        pos[k] += usize::from(truth.is_positive());
    }
    let frac = |k: usize| (n[k] > 0).then(|| pos[k] as f64 / n[k] as f64);
    Ok((frac(0), frac(1)))
}
