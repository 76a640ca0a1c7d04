//! The refinement loop: split by the current labels, obtain priors, train,
//! re-label, repeat.
//!
//! Each seed first holds out a test portion of the dataset (20% by default,
//! giving the 7:1:2 train/validation/test layout together with the trainer's
//! validation carve). Only the remaining working portion is ever split,
//! trained on, and re-labeled; accuracy is always measured on the held-out
//! portion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ClassPriors, CorpusSplit, Dataset, Label, PseudoLabeling, DEFAULT_PRIOR_GAP_FLOOR};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, measured_priors_of_labeling, scorer_accuracy};
use crate::model::{relabel, train, TrainConfig, TrainReport};
use crate::priors::{estimate_priors, oracle_priors, FewLabeledSubset, PiSource};
use crate::risk::Estimator;
use crate::seeding::{derive_seed, keyed_rng, STREAM_TEST_SPLIT, STREAM_TRAIN};

/// How the pipeline obtains `(pi_plus, theta_p, theta_n)` before each training round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PriorMode {
    /// Exact priors from ground truth, recomputed every iteration.
    #[default]
    Oracle,
    /// Estimated from this many revealed-truth samples.
    FewLabeled(usize),
    Fixed {
        pi_plus: f64,
        theta_p: f64,
        theta_n: f64,
    },
}


impl FromStr for PriorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::invalid(format!(
                "invalid prior mode {s:?}, expected oracle, few-labeled:<n> or fixed:<pi>,<theta_p>,<theta_n>"
            ))
        };
        if s == "oracle" {
            return Ok(PriorMode::Oracle);
        }
        if let Some(n) = s.strip_prefix("few-labeled:") {
            return n.trim().parse().map(PriorMode::FewLabeled).map_err(|_| bad());
        }
        if let Some(rest) = s.strip_prefix("fixed:") {
            let v = rest
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad())?;
            if let [pi_plus, theta_p, theta_n] = v[..] {
                return Ok(PriorMode::Fixed {
                    pi_plus,
                    theta_p,
                    theta_n,
                });
            }
        }
        Err(bad())
    }
}

impl fmt::Display for PriorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorMode::Oracle => f.write_str("oracle"),
            PriorMode::FewLabeled(n) => write!(f, "few-labeled:{n}"),
            PriorMode::Fixed {
                pi_plus,
                theta_p,
                theta_n,
            } => write!(f, "fixed:{pi_plus},{theta_p},{theta_n}"),
        }
    }
}

impl TryFrom<String> for PriorMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PriorMode> for String {
    fn from(m: PriorMode) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub iterations: usize,
    pub prior_mode: PriorMode,
    /// Few-labeled mode only: re-estimate against each iteration's labels
    /// instead of reusing the iteration-0 estimate.
    pub reestimate_priors: bool,
    pub pi_source: PiSource,
    pub prior_gap_floor: f64,
    /// Fraction of the dataset held out for test accuracy.
    pub test_fraction: f64,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            iterations: 5,
            prior_mode: PriorMode::Oracle,
            reestimate_priors: false,
            pi_source: PiSource::Mixture,
            prior_gap_floor: DEFAULT_PRIOR_GAP_FLOOR,
            test_fraction: 0.2,
            seeds: vec![0, 1, 2],
            train: TrainConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn estimator(&self) -> Estimator {
        self.train.estimator
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if let PriorMode::FewLabeled(n) = self.prior_mode {
            if n < 2 {
                return Err(Error::invalid("few-labeled subset size must be at least 2"));
            }
        }
        if let PriorMode::Fixed {
            pi_plus,
            theta_p,
            theta_n,
        } = self.prior_mode
        {
            ClassPriors::with_gap_floor(pi_plus, theta_p, theta_n, self.prior_gap_floor)?;
        }
        if !(self.prior_gap_floor > 0.0 && self.prior_gap_floor < 1.0) {
            return Err(Error::invalid("prior_gap_floor must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::invalid("test_fraction must lie in [0, 1)"));
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub best_val_objective: f64,
    pub final_train_objective: f64,
}

impl From<&TrainReport> for TrainSummary {
    fn from(r: &TrainReport) -> Self {
        Self {
            best_epoch: r.best_epoch,
            best_val_objective: r.val_objective_per_epoch[r.best_epoch],
            final_train_objective: *r.train_objective_per_epoch.last().unwrap_or(&f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Held-out accuracy; absent when the dataset carries no truth.
    pub test_accuracy: Option<f64>,
    pub measured_theta_p: Option<f64>,
    pub measured_theta_n: Option<f64>,
    /// Priors handed to the trainer; absent at iteration 0.
    pub used_priors: Option<ClassPriors>,
    pub train: Option<TrainSummary>,
    pub n_pos: usize,
    pub n_neg: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregatePoint {
    pub iteration: usize,
    pub mean_accuracy: Option<f64>,
    /// Population standard deviation over seeds.
    pub std_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub config: PipelineConfig,
    pub per_seed: Vec<SeedRun>,
    /// One entry per iteration, iteration 0 included.
    pub aggregate: Vec<AggregatePoint>,
    /// Filled in by callers that time the run; excluded by default so
    /// identical runs export identical files.
    pub wall_clock_seconds: Option<f64>,
}

impl RunResult {
    pub fn final_mean_accuracy(&self) -> Option<f64> {
        self.aggregate.last().and_then(|a| a.mean_accuracy)
    }

    pub fn mean_accuracy_at(&self, iteration: usize) -> Option<f64> {
        self.aggregate.get(iteration).and_then(|a| a.mean_accuracy)
    }
}

/// A failure inside the loop, with the records completed before it.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineError {
    pub seed: Option<u64>,
    pub iteration: Option<usize>,
    pub source: Error,
    pub completed: Vec<IterationRecord>,
}

impl PipelineError {
    fn setup(source: Error) -> Self {
        Self {
            seed: None,
            iteration: None,
            source,
            completed: Vec::new(),
        }
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.seed, self.iteration) {
            (Some(s), Some(t)) => write!(f, "seed {s}, iteration {t}: {}", self.source),
            (Some(s), None) => write!(f, "seed {s}: {}", self.source),
            _ => write!(f, "{}", self.source),
        }
    }
}

impl std::error::Error for PipelineError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// Seeded working/test partition of `dataset`.
pub fn holdout_split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let mut ids: Vec<_> = dataset.ids().collect();
    ids.shuffle(&mut keyed_rng(seed, STREAM_TEST_SPLIT, 0));
    let n_test = (test_fraction * ids.len() as f64).round() as usize;
    let test: BTreeSet<_> = ids[..n_test].iter().copied().collect();
    let work: BTreeSet<_> = ids[n_test..].iter().copied().collect();
    let name = dataset.name();
    Ok((
        dataset.subset(&work, format!("{name}-work"))?,
        dataset.subset(&test, format!("{name}-test"))?,
    ))
}

struct SeedContext<'a> {
    cfg: &'a PipelineConfig,
    seed: u64,
    work: Dataset,
    test: Dataset,
    has_truth: bool,
}

impl SeedContext<'_> {
    fn record(
        &self,
        iteration: usize,
        labeling: &PseudoLabeling,
        test_accuracy: Option<f64>,
        used_priors: Option<ClassPriors>,
        report: Option<&TrainReport>,
    ) -> Result<IterationRecord> {
        let (measured_theta_p, measured_theta_n) = if self.has_truth {
            measured_priors_of_labeling(&self.work, labeling)?
        } else {
            (None, None)
        };
        Ok(IterationRecord {
            iteration,
            test_accuracy,
            measured_theta_p,
            measured_theta_n,
            used_priors,
            train: report.map(TrainSummary::from),
            n_pos: labeling.count(Label::Positive),
            n_neg: labeling.count(Label::Negative),
        })
    }

    fn priors_for(
        &self,
        split: &CorpusSplit,
        labeling: &PseudoLabeling,
        few: &mut Option<(FewLabeledSubset, Option<ClassPriors>)>,
    ) -> Result<ClassPriors> {
        let floor = self.cfg.prior_gap_floor;
        if self.cfg.estimator() == Estimator::Pn {
            // PN reads the pseudo-labels as clean, which is the (pi, 1, 0) case
            let pi = split.positive().len() as f64 / split.len() as f64;
            return ClassPriors::with_gap_floor(pi, 1.0, 0.0, floor);
        }
        match self.cfg.prior_mode {
            PriorMode::Oracle => oracle_priors(&self.work, split, floor),
            PriorMode::Fixed {
                pi_plus,
                theta_p,
                theta_n,
            } => ClassPriors::with_gap_floor(pi_plus, theta_p, theta_n, floor),
            PriorMode::FewLabeled(_) => {
                let (subset, cached) = few.as_mut().ok_or(Error::MissingTruth)?;
                if let (Some(p), false) = (*cached, self.cfg.reestimate_priors) {
                    return Ok(p);
                }
                let p = estimate_priors(&self.work, labeling, subset, self.cfg.pi_source, floor)?;
                *cached = Some(p);
                Ok(p)
            }
        }
    }
}

impl SeedContext<'_> {
    /// One round: split, priors, train, re-label.
    fn iterate(
        &self,
        t: usize,
        labeling: &PseudoLabeling,
        few: &mut Option<(FewLabeledSubset, Option<ClassPriors>)>,
    ) -> Result<(IterationRecord, PseudoLabeling)> {
        let split = CorpusSplit::from_labeling(&self.work, labeling)?;
        let priors = self.priors_for(&split, labeling, few)?;
        let train_cfg = TrainConfig {
            seed: derive_seed(self.seed, STREAM_TRAIN, t as u64),
            ..self.cfg.train.clone()
        };
        let report = train(&self.work, &split, &priors, &train_cfg)?;
        let next = relabel(&report.final_scorer, &self.work, t)?;
        let test_acc = if self.has_truth && !self.test.is_empty() {
            Some(scorer_accuracy(&self.test, &report.final_scorer)?)
        } else {
            None
        };
        let rec = self.record(t, &next, test_acc, Some(priors), Some(&report))?;
        Ok((rec, next))
    }
}

fn run_seed(dataset: &Dataset, initial: &PseudoLabeling, cfg: &PipelineConfig, seed: u64) -> Result<Vec<IterationRecord>, PipelineError> {
    let mut records = Vec::with_capacity(cfg.iterations + 1);
    let fail = |iteration: Option<usize>, source: Error, records: &Vec<IterationRecord>| PipelineError {
        seed: Some(seed),
        iteration,
        source,
        completed: records.clone(),
    };

    let has_truth = dataset.has_truth();
    let test_fraction = if has_truth { cfg.test_fraction } else { 0.0 };
    let (work, test) = holdout_split(dataset, test_fraction, seed).map_err(|e| fail(None, e, &records))?;
    if work.len() < 4 {
        return Err(fail(None, Error::invalid("working portion needs at least 4 samples"), &records));
    }
    let ctx = SeedContext {
        cfg,
        seed,
        work,
        test,
        has_truth,
    };

    let mut labeling = initial.restrict(&ctx.work).map_err(|e| fail(Some(0), e, &records))?;
    let test_acc = if has_truth && !ctx.test.is_empty() {
        let test_labels = initial.restrict(&ctx.test).map_err(|e| fail(Some(0), e, &records))?;
        Some(accuracy(&ctx.test, &test_labels).map_err(|e| fail(Some(0), e, &records))?)
    } else {
        None
    };
    records.push(ctx.record(0, &labeling, test_acc, None, None).map_err(|e| fail(Some(0), e, &records))?);

    let mut few = match cfg.prior_mode {
        PriorMode::FewLabeled(n) if cfg.estimator() != Estimator::Pn => {
            let subset = FewLabeledSubset::sample(&ctx.work, n, seed).map_err(|e| fail(Some(1), e, &records))?;
            Some((subset, None))
        }
        _ => None,
    };

    for t in 1..=cfg.iterations {
        match ctx.iterate(t, &labeling, &mut few) {
            Ok((rec, next)) => {
                records.push(rec);
                labeling = next;
            }
            Err(e) => return Err(fail(Some(t), e, &records)),
        }
    }
    Ok(records)
}

fn aggregate(per_seed: &[SeedRun], iterations: usize) -> Vec<AggregatePoint> {
    (0..=iterations)
        .map(|t| {
            let accs: Vec<f64> = per_seed
                .iter()
                .filter_map(|r| r.records.get(t).and_then(|rec| rec.test_accuracy))
                .collect();
            let (mean, std) = if accs.is_empty() {
                (None, None)
            } else {
                let n = accs.len() as f64;
                let mean = accs.iter().sum::<f64>() / n;
                let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
                (Some(mean), Some(var.sqrt()))
            };
            AggregatePoint {
                iteration: t,
                mean_accuracy: mean,
                std_accuracy: std,
            }
        })
        .collect()
}

/// Runs the full loop for every configured seed.
///
/// Seeds run in parallel on the current rayon pool; results are collected in
/// seed order. The first failing seed (in seed order) is returned.
pub fn run_pipeline(
    dataset: &Dataset,
    initial: &PseudoLabeling,
    cfg: &PipelineConfig,
) -> Result<RunResult, PipelineError> {
    cfg.validate().map_err(PipelineError::setup)?;
    if initial.iteration() != 0 {
        return Err(PipelineError::setup(Error::invalid(
            "initial labeling must be at iteration 0",
        )));
    }
    PseudoLabeling::new(dataset, 0, initial.labels().clone()).map_err(PipelineError::setup)?;
    let needs_truth = matches!(cfg.prior_mode, PriorMode::Oracle | PriorMode::FewLabeled(_))
        && cfg.estimator() != Estimator::Pn;
    if needs_truth && !dataset.has_truth() {
        return Err(PipelineError::setup(Error::MissingTruth));
    }

    let runs: Vec<_> = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(dataset, initial, cfg, seed).map(|records| SeedRun { seed, records }))
        .collect();
    let per_seed = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(RunResult {
        aggregate: aggregate(&per_seed, cfg.iterations),
        config: cfg.clone(),
        per_seed,
        wall_clock_seconds: None,
    })
}

/// Runs every estimator under identical data, seeds and prior mode. A failing
/// estimator does not stop the others.
pub fn compare_estimators(
    dataset: &Dataset,
    initial: &PseudoLabeling,
    base: &PipelineConfig,
) -> BTreeMap<Estimator, Result<RunResult, PipelineError>> {
    Estimator::ALL
        .iter()
        .map(|&estimator| {
            let mut cfg = base.clone();
            cfg.train.estimator = estimator;
            (estimator, run_pipeline(dataset, initial, &cfg))
        })
        .collect()
}
