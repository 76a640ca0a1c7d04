//! Iteration-0 labelings: a simulated class-conditional noisy annotator, or
//! labels brought in from an external source.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, Label, PseudoLabeling, SampleId};
use crate::error::{Error, Result};
use crate::seeding::{keyed_rng, STREAM_ANNOTATOR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotatorSpec {
    /// Probability that a true positive is labeled `+1`.
    pub acc_pos: f64,
    /// Probability that a true negative is labeled `-1`.
    pub acc_neg: f64,
    pub seed: u64,
}

impl Default for AnnotatorSpec {
    fn default() -> Self {
        Self {
            acc_pos: 0.7,
            acc_neg: 0.7,
            seed: 0,
        }
    }
}

impl AnnotatorSpec {
    pub fn new(acc_pos: f64, acc_neg: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            acc_pos,
            acc_neg,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("acc_pos", self.acc_pos), ("acc_neg", self.acc_neg)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    /// Corpus priors this annotator induces on balanced truth.
    pub fn expected_balanced_priors(&self) -> (f64, f64) {
        let (ap, an) = (self.acc_pos, self.acc_neg);
        (ap / (ap + 1.0 - an), (1.0 - ap) / ((1.0 - ap) + an))
    }
}

/// Labels each sample correctly with its class's accuracy. The draw for a
/// sample depends only on `(seed, id)`, so the result does not depend on the
/// order or the subset of samples.
pub fn simulate_annotator(dataset: &Dataset, spec: &AnnotatorSpec) -> Result<PseudoLabeling> {
    spec.validate()?;
    if !dataset.has_truth() {
        return Err(Error::MissingTruth);
    }
    let labels = dataset
        .samples()
        .iter()
        .map(|s| {
            let truth = s.true_label.ok_or(Error::MissingTruth)?;
            let acc = match truth {
                Label::Positive => spec.acc_pos,
                Label::Negative => spec.acc_neg,
            };
            let u: f64 = keyed_rng(spec.seed, STREAM_ANNOTATOR, s.id).random();
            let label = if u < acc { truth } else { truth.flip() };
            Ok((s.id, label))
        })
        .collect::<Result<_>>()?;
    PseudoLabeling::new(dataset, 0, labels)
}

/// Validates an externally produced `id -> ±1` map as an iteration-0 labeling.
pub fn import_labeling(dataset: &Dataset, labels: &BTreeMap<SampleId, i64>) -> Result<PseudoLabeling> {
    let labels = labels
        .iter()
        .map(|(&id, &v)| Ok((id, Label::try_from(v)?)))
        .collect::<Result<_>>()?;
    PseudoLabeling::new(dataset, 0, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Sample;

    fn balanced(n: usize) -> Dataset {
        Dataset::new(
            1,
            (0..n)
                .map(|i| {
                    let y = if i % 2 == 0 { Label::Positive } else { Label::Negative };
                    Sample::new(i as u64 * 7 + 3, vec![i as f64], Some(y))
                })
                .collect(),
            "balanced",
        )
        .unwrap()
    }

    #[test]
    fn noiseless_and_fully_flipped() {
        let ds = balanced(100);
        let truth = ds.truth_labeling().unwrap();
        assert_eq!(simulate_annotator(&ds, &AnnotatorSpec::new(1.0, 1.0, 4).unwrap()).unwrap(), truth);
        assert_eq!(
            simulate_annotator(&ds, &AnnotatorSpec::new(0.0, 0.0, 4).unwrap()).unwrap(),
            truth.complement()
        );
    }

    #[test]
    fn needs_truth() {
        let ds = Dataset::new(1, vec![Sample::new(0, vec![0.0], None)], "x").unwrap();
        assert_eq!(
            simulate_annotator(&ds, &AnnotatorSpec::default()).unwrap_err(),
            Error::MissingTruth
        );
    }

    #[test]
    fn order_and_subset_independent() {
        let ds = balanced(300);
        let spec = AnnotatorSpec::new(0.6, 0.8, 11).unwrap();
        let full = simulate_annotator(&ds, &spec).unwrap();
        let mut reversed: Vec<Sample> = ds.samples().to_vec();
        reversed.reverse();
        let rev = Dataset::new(1, reversed, "rev").unwrap();
        assert_eq!(simulate_annotator(&rev, &spec).unwrap(), full);
        let keep = ds.ids().filter(|id| id % 3 == 0).collect();
        let sub = ds.subset(&keep, "sub").unwrap();
        let part = simulate_annotator(&sub, &spec).unwrap();
        for (id, l) in part.iter() {
            assert_eq!(full.get(id), Some(l));
        }
    }

    #[test]
    fn import_validates() {
        let ds = balanced(3);
        let ids: Vec<_> = ds.ids().collect();
        let ok: BTreeMap<_, _> = ids.iter().map(|&id| (id, 1)).collect();
        assert_eq!(import_labeling(&ds, &ok).unwrap().len(), 3);
        let mut missing = ok.clone();
        missing.remove(&ids[1]);
        assert_eq!(import_labeling(&ds, &missing).unwrap_err(), Error::MissingLabel(ids[1]));
        let mut zero = ok.clone();
        zero.insert(ids[0], 0);
        assert_eq!(import_labeling(&ds, &zero).unwrap_err(), Error::InvalidLabel("0".into()));
        let mut unknown = ok;
        unknown.insert(999, 1);
        assert_eq!(import_labeling(&ds, &unknown).unwrap_err(), Error::UnknownId(999));
    }

    #[test]
    fn spec_validation() {
        assert!(AnnotatorSpec::new(1.1, 0.5, 0).is_err());
        assert!(AnnotatorSpec::new(0.5, -0.1, 0).is_err());
        let (tp, tn) = AnnotatorSpec::new(0.8, 0.8, 0).unwrap().expected_balanced_priors();
        assert!((tp - 0.8).abs() < 1e-15 && (tn - 0.2).abs() < 1e-15);
    }
}
