//! Domain types shared by every other module.
//!
//! Everything here is immutable once constructed; constructors validate the
//! invariants and the rest of the crate relies on them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type SampleId = u64;

/// Minimum allowed `theta_p - theta_n` for a usable set of priors.
pub const DEFAULT_PRIOR_GAP_FLOOR: f64 = 1e-3;

/// A binary label, `+1` or `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }

    /// Sign of a score, with ties at zero going to [`Label::Positive`].
    pub fn from_score(score: f64) -> Self {
        if score < 0.0 {
            Label::Negative
        } else {
            Label::Positive
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn side(self) -> Side {
        match self {
            Label::Positive => Side::Positive,
            Label::Negative => Side::Negative,
        }
    }
}

impl TryFrom<i64> for Label {
    type Error = Error;

    fn try_from(value: i64) -> Result<Self> {
        match value {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(Error::InvalidLabel(other.to_string())),
        }
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" | "+1" => Ok(Label::Positive),
            "-1" => Ok(Label::Negative),
            other => Err(Error::InvalidLabel(other.to_string())),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_i8())
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.as_i8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Label::try_from(v).map_err(serde::de::Error::custom)
    }
}

/// Which pseudo-corpus something refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Positive,
    Negative,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Positive => "positive",
            Side::Negative => "negative",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: SampleId,
    pub features: Vec<f64>,
    /// Hidden ground truth. Only evaluation and oracle paths look at it.
    pub true_label: Option<Label>,
}

impl Sample {
    pub fn new(id: SampleId, features: Vec<f64>, true_label: Option<Label>) -> Self {
        Self {
            id,
            features,
            true_label,
        }
    }
}

/// An ordered collection of fixed-dimension samples with unique ids.
#[derive(Debug, Clone)]
pub struct Dataset {
    dim: usize,
    samples: Vec<Sample>,
    name: String,
    index: HashMap<SampleId, usize>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.samples == other.samples && self.name == other.name
    }
}

impl Dataset {
    /// Validates and wraps `samples`, preserving their order.
    pub fn new(dim: usize, samples: Vec<Sample>, name: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dataset dimension must be positive"));
        }
        let mut index = HashMap::with_capacity(samples.len());
        for (pos, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    id: s.id,
                    expected: dim,
                    found: s.features.len(),
                });
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteFeature(s.id));
            }
            if index.insert(s.id, pos).is_some() {
                return Err(Error::DuplicateId(s.id));
            }
        }
        let with_truth = samples.iter().filter(|s| s.true_label.is_some()).count();
        if with_truth != 0 && with_truth != samples.len() {
            return Err(Error::MixedTruth);
        }
        Ok(Self {
            dim,
            samples,
            name: name.into(),
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// True when every sample carries a true label (and there is at least one sample).
    pub fn has_truth(&self) -> bool {
        self.samples.first().is_some_and(|s| s.true_label.is_some())
    }

    pub fn get(&self, id: SampleId) -> Option<&Sample> {
        self.index.get(&id).map(|&i| &self.samples[i])
    }

    pub fn contains(&self, id: SampleId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = SampleId> + '_ {
        self.samples.iter().map(|s| s.id)
    }

    pub fn true_label(&self, id: SampleId) -> Result<Label> {
        let s = self.get(id).ok_or(Error::UnknownId(id))?;
        s.true_label.ok_or(Error::MissingTruth)
    }

    /// The samples whose ids are in `keep`, in this dataset's order.
    pub fn subset(&self, keep: &BTreeSet<SampleId>, name: impl Into<String>) -> Result<Self> {
        if let Some(&id) = keep.iter().find(|&&id| !self.contains(id)) {
            return Err(Error::UnknownId(id));
        }
        let samples = self
            .samples
            .iter()
            .filter(|s| keep.contains(&s.id))
            .cloned()
            .collect();
        Dataset::new(self.dim, samples, name)
    }

    /// Ground-truth labels as a labeling, when the dataset carries them.
    pub fn truth_labeling(&self) -> Result<PseudoLabeling> {
        let labels = self
            .samples
            .iter()
            .map(|s| s.true_label.map(|l| (s.id, l)).ok_or(Error::MissingTruth))
            .collect::<Result<BTreeMap<_, _>>>()?;
        if labels.is_empty() {
            return Err(Error::MissingTruth);
        }
        PseudoLabeling::new(self, 0, labels)
    }
}

/// A hard `±1` label for every sample of a dataset at one iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLabeling {
    iteration: usize,
    labels: BTreeMap<SampleId, Label>,
}

impl PseudoLabeling {
    /// Fails unless `labels` covers the ids of `dataset` exactly.
    pub fn new(
        dataset: &Dataset,
        iteration: usize,
        labels: BTreeMap<SampleId, Label>,
    ) -> Result<Self> {
        if let Some(&id) = labels.keys().find(|&&id| !dataset.contains(id)) {
            return Err(Error::UnknownId(id));
        }
        if let Some(id) = dataset.ids().find(|id| !labels.contains_key(id)) {
            return Err(Error::MissingLabel(id));
        }
        Ok(Self { iteration, labels })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn with_iteration(mut self, iteration: usize) -> Self {
        self.iteration = iteration;
        self
    }

    pub fn get(&self, id: SampleId) -> Option<Label> {
        self.labels.get(&id).copied()
    }

    pub fn labels(&self) -> &BTreeMap<SampleId, Label> {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SampleId, Label)> + '_ {
        self.labels.iter().map(|(&id, &l)| (id, l))
    }

    pub fn complement(&self) -> Self {
        Self {
            iteration: self.iteration,
            labels: self.labels.iter().map(|(&id, l)| (id, l.flip())).collect(),
        }
    }

    /// The labels of the samples in `dataset`, which must be a subset of the
    /// dataset this labeling was built for.
    pub fn restrict(&self, dataset: &Dataset) -> Result<Self> {
        let labels = dataset
            .ids()
            .map(|id| self.get(id).map(|l| (id, l)).ok_or(Error::MissingLabel(id)))
            .collect::<Result<_>>()?;
        Ok(Self {
            iteration: self.iteration,
            labels,
        })
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.values().filter(|&&l| l == label).count()
    }
}

/// The pseudo-positive / pseudo-negative partition of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplit {
    positive: BTreeSet<SampleId>,
    negative: BTreeSet<SampleId>,
}

impl CorpusSplit {
    /// Splits `dataset` by `labeling`. Either corpus ending up empty is an error.
    pub fn from_labeling(dataset: &Dataset, labeling: &PseudoLabeling) -> Result<Self> {
        let mut positive = BTreeSet::new();
        let mut negative = BTreeSet::new();
        for id in dataset.ids() {
            match labeling.get(id).ok_or(Error::MissingLabel(id))? {
                Label::Positive => positive.insert(id),
                Label::Negative => negative.insert(id),
            };
        }
        if labeling.len() != dataset.len() {
            if let Some(id) = labeling.labels.keys().find(|&&id| !dataset.contains(id)) {
                return Err(Error::UnknownId(*id));
            }
        }
        Self::from_parts(positive, negative)
    }

    pub fn from_parts(positive: BTreeSet<SampleId>, negative: BTreeSet<SampleId>) -> Result<Self> {
        if let Some(&id) = positive.intersection(&negative).next() {
            return Err(Error::DuplicateId(id));
        }
        if positive.is_empty() {
            return Err(Error::DegenerateSplit(Side::Positive));
        }
        if negative.is_empty() {
            return Err(Error::DegenerateSplit(Side::Negative));
        }
        Ok(Self { positive, negative })
    }

    pub fn positive(&self) -> &BTreeSet<SampleId> {
        &self.positive
    }

    pub fn negative(&self) -> &BTreeSet<SampleId> {
        &self.negative
    }

    pub fn corpus(&self, side: Side) -> &BTreeSet<SampleId> {
        match side {
            Side::Positive => &self.positive,
            Side::Negative => &self.negative,
        }
    }

    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_labeling(&self, iteration: usize) -> PseudoLabeling {
        let labels = self
            .positive
            .iter()
            .map(|&id| (id, Label::Positive))
            .chain(self.negative.iter().map(|&id| (id, Label::Negative)))
            .collect();
        PseudoLabeling { iteration, labels }
    }

    /// Checks that the split covers exactly the ids of `dataset`.
    pub fn check_covers(&self, dataset: &Dataset) -> Result<()> {
        for id in self.positive.iter().chain(&self.negative) {
            if !dataset.contains(*id) {
                return Err(Error::UnknownId(*id));
            }
        }
        if let Some(id) = dataset
            .ids()
            .find(|id| !self.positive.contains(id) && !self.negative.contains(id))
        {
            return Err(Error::MissingLabel(id));
        }
        Ok(())
    }
}

/// Shorthand for [`CorpusSplit::from_labeling`].
pub fn split_from_labeling(dataset: &Dataset, labeling: &PseudoLabeling) -> Result<CorpusSplit> {
    CorpusSplit::from_labeling(dataset, labeling)
}

/// `(pi_plus, theta_p, theta_n)`: the class prior and the positive fraction of
/// each pseudo-corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassPriors {
    pi_plus: f64,
    theta_p: f64,
    theta_n: f64,
    #[serde(skip)]
    gap_floor: f64,
}

impl ClassPriors {
    pub fn new(pi_plus: f64, theta_p: f64, theta_n: f64) -> Result<Self> {
        Self::with_gap_floor(pi_plus, theta_p, theta_n, DEFAULT_PRIOR_GAP_FLOOR)
    }

    pub fn with_gap_floor(pi_plus: f64, theta_p: f64, theta_n: f64, gap_floor: f64) -> Result<Self> {
        if !(pi_plus > 0.0 && pi_plus < 1.0) {
            return Err(Error::invalid(format!("pi_plus must lie in (0, 1), got {pi_plus}")));
        }
        for (name, v) in [("theta_p", theta_p), ("theta_n", theta_n)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(gap_floor > 0.0 && gap_floor.is_finite()) {
            return Err(Error::invalid(format!("prior gap floor must be positive, got {gap_floor}")));
        }
        if !(theta_p > theta_n && theta_p - theta_n >= gap_floor) {
            return Err(Error::DegeneratePriors {
                theta_p,
                theta_n,
                floor: gap_floor,
            });
        }
        Ok(Self {
            pi_plus,
            theta_p,
            theta_n,
            gap_floor,
        })
    }

    pub fn pi_plus(&self) -> f64 {
        self.pi_plus
    }

    pub fn theta_p(&self) -> f64 {
        self.theta_p
    }

    pub fn theta_n(&self) -> f64 {
        self.theta_n
    }

    pub fn gap_floor(&self) -> f64 {
        self.gap_floor
    }
}

/// The weights `(a, b, c, d)` of the UU risk. Build them with
/// [`crate::risk::compute_coefficients`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UUCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Logistic,
    Sigmoid,
}
