//! Pointwise losses and the empirical PN, UU and robust UU risks.
//!
//! Notation follows the usual risk-rewriting setup: the pseudo-positive corpus
//! is drawn from `theta_p * p_pos + (1 - theta_p) * p_neg`, the pseudo-negative
//! corpus from the same mixture with `theta_n`, and
//!
//! ```text
//! R_uu  = a R_p(+) - b R_p(-) - c R_n(+) + d R_n(-)
//! R_ruu = f(a R_p(+) - c R_n(+)) + f(d R_n(-) - b R_p(-))
//! ```
//!
//! where `R_p(y)` is the mean loss of the pseudo-positive corpus under label
//! `y` and `f(x) = x` for `x > 0`, `lambda * x` for `x < 0` (`lambda < 0`).
//! All means are ordered left-to-right sums, so results are reproducible.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{ClassPriors, Label, LossKind, Side, UUCoefficients};
use crate::error::{Error, Result};

/// Default slope of the leaky correction on negative brackets.
pub const DEFAULT_LAMBDA: f64 = -0.001;

/// Mean losses of both corpora under both hypothetical labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartialRisks {
    /// pseudo-positive corpus, label +1
    pub r_pp: f64,
    /// pseudo-positive corpus, label -1
    pub r_pm: f64,
    /// pseudo-negative corpus, label +1
    pub r_np: f64,
    /// pseudo-negative corpus, label -1
    pub r_nm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RobustConfig {
    lambda: f64,
}

impl RobustConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda < 0.0 && lambda.is_finite() {
            Ok(Self { lambda })
        } else {
            Err(Error::invalid(format!("lambda must be finite and negative, got {lambda}")))
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
        }
    }
}

impl TryFrom<f64> for RobustConfig {
    type Error = Error;

    fn try_from(lambda: f64) -> Result<Self> {
        Self::new(lambda)
    }
}

impl From<RobustConfig> for f64 {
    fn from(cfg: RobustConfig) -> f64 {
        cfg.lambda
    }
}

/// Which empirical risk a scorer is trained on.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Treat the pseudo-labels as clean labels.
    Pn,
    /// Unbiased UU risk, no correction.
    Uu,
    /// UU risk with each bracket passed through the leaky correction.
    #[default]
    #[serde(alias = "robust_uu")]
    RobustUu,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Pn, Estimator::Uu, Estimator::RobustUu];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Pn => "pn",
            Estimator::Uu => "uu",
            Estimator::RobustUu => "robust-uu",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pn" => Ok(Estimator::Pn),
            "uu" => Ok(Estimator::Uu),
            "robust-uu" | "robust_uu" => Ok(Estimator::RobustUu),
            other => Err(Error::invalid(format!(
                "unknown estimator {other:?}, expected pn, uu or robust-uu"
            ))),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Pointwise loss of `score` against `label`; always non-negative.
pub fn loss(score: f64, label: Label, kind: LossKind) -> f64 {
    let z = label.sign() * score;
    match kind {
        // ln(1 + e^{-z}) without overflow
        LossKind::Logistic => (-z).max(0.0) + (-z.abs()).exp().ln_1p(),
        LossKind::Sigmoid => sigmoid(-z),
    }
}

/// Derivative of [`loss`] with respect to `score`.
pub fn loss_grad(score: f64, label: Label, kind: LossKind) -> f64 {
    let y = label.sign();
    let z = y * score;
    match kind {
        LossKind::Logistic => -y * sigmoid(-z),
        LossKind::Sigmoid => -y * sigmoid(-z) * sigmoid(z),
    }
}

/// Closed-form UU weights for `priors`.
pub fn compute_coefficients(priors: &ClassPriors) -> Result<UUCoefficients> {
    let (pi, tp, tn) = (priors.pi_plus(), priors.theta_p(), priors.theta_n());
    let gap = tp - tn;
    if gap.is_nan() || gap < priors.gap_floor() {
        return Err(Error::DegeneratePriors {
            theta_p: tp,
            theta_n: tn,
            floor: priors.gap_floor(),
        });
    }
    Ok(UUCoefficients {
        a: (1.0 - tn) * pi / gap,
        b: tn * (1.0 - pi) / gap,
        c: (1.0 - tp) * pi / gap,
        d: tp * (1.0 - pi) / gap,
    })
}

fn mean_loss(scores: &[f64], label: Label, kind: LossKind) -> f64 {
    scores.iter().map(|&s| loss(s, label, kind)).sum::<f64>() / scores.len() as f64
}

pub fn partial_risks(scores_p: &[f64], scores_n: &[f64], kind: LossKind) -> Result<PartialRisks> {
    if scores_p.is_empty() {
        return Err(Error::EmptyCorpus(Side::Positive));
    }
    if scores_n.is_empty() {
        return Err(Error::EmptyCorpus(Side::Negative));
    }
    Ok(PartialRisks {
        r_pp: mean_loss(scores_p, Label::Positive, kind),
        r_pm: mean_loss(scores_p, Label::Negative, kind),
        r_np: mean_loss(scores_n, Label::Positive, kind),
        r_nm: mean_loss(scores_n, Label::Negative, kind),
    })
}

/// The unbiased UU risk. Can be negative.
pub fn uu_risk(pr: &PartialRisks, coeffs: &UUCoefficients) -> f64 {
    coeffs.a * pr.r_pp - coeffs.b * pr.r_pm - coeffs.c * pr.r_np + coeffs.d * pr.r_nm
}

/// The generalized leaky ReLU `f`. `f(0) = 0`.
pub fn leaky_correction(x: f64, cfg: &RobustConfig) -> f64 {
    if x > 0.0 {
        x
    } else if x < 0.0 {
        cfg.lambda * x
    } else {
        0.0
    }
}

fn leaky_slope(x: f64, cfg: &RobustConfig) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        cfg.lambda
    } else {
        0.0
    }
}

/// The two grouped brackets `(a R_p(+) - c R_n(+), d R_n(-) - b R_p(-))`.
pub fn brackets(pr: &PartialRisks, coeffs: &UUCoefficients) -> (f64, f64) {
    (
        coeffs.a * pr.r_pp - coeffs.c * pr.r_np,
        coeffs.d * pr.r_nm - coeffs.b * pr.r_pm,
    )
}

pub fn robust_uu_risk(pr: &PartialRisks, coeffs: &UUCoefficients, cfg: &RobustConfig) -> f64 {
    let (pos, neg) = brackets(pr, coeffs);
    leaky_correction(pos, cfg) + leaky_correction(neg, cfg)
}

/// Supervised risk, reading the pseudo-positive corpus as positives and the
/// pseudo-negative corpus as negatives.
pub fn pn_risk(pr: &PartialRisks, pi_plus: f64) -> f64 {
    pi_plus * pr.r_pp + (1.0 - pi_plus) * pr.r_nm
}

/// Per-sample derivatives of a risk with respect to each score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradients {
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

/// Chain rule through both brackets with slopes `(w_pos, w_neg)` on them.
fn bracket_grads(
    scores_p: &[f64],
    scores_n: &[f64],
    kind: LossKind,
    coeffs: &UUCoefficients,
    w_pos: f64,
    w_neg: f64,
) -> ScoreGradients {
    let np = scores_p.len() as f64;
    let nn = scores_n.len() as f64;
    let positive = scores_p
        .iter()
        .map(|&s| {
            (w_pos * coeffs.a * loss_grad(s, Label::Positive, kind)
                - w_neg * coeffs.b * loss_grad(s, Label::Negative, kind))
                / np
        })
        .collect();
    let negative = scores_n
        .iter()
        .map(|&s| {
            (w_neg * coeffs.d * loss_grad(s, Label::Negative, kind)
                - w_pos * coeffs.c * loss_grad(s, Label::Positive, kind))
                / nn
        })
        .collect();
    ScoreGradients { positive, negative }
}

pub fn uu_grad(
    scores_p: &[f64],
    scores_n: &[f64],
    kind: LossKind,
    coeffs: &UUCoefficients,
) -> Result<ScoreGradients> {
    partial_risks(scores_p, scores_n, kind)?;
    Ok(bracket_grads(scores_p, scores_n, kind, coeffs, 1.0, 1.0))
}

/// Gradient of [`robust_uu_risk`]. A bracket's contribution is scaled by 1
/// when it is positive, by `lambda` when negative and by 0 at exactly zero.
pub fn robust_uu_grad(
    scores_p: &[f64],
    scores_n: &[f64],
    kind: LossKind,
    coeffs: &UUCoefficients,
    cfg: &RobustConfig,
) -> Result<ScoreGradients> {
    let pr = partial_risks(scores_p, scores_n, kind)?;
    let (pos, neg) = brackets(&pr, coeffs);
    Ok(bracket_grads(
        scores_p,
        scores_n,
        kind,
        coeffs,
        leaky_slope(pos, cfg),
        leaky_slope(neg, cfg),
    ))
}

pub fn pn_grad(
    scores_p: &[f64],
    scores_n: &[f64],
    kind: LossKind,
    pi_plus: f64,
) -> Result<ScoreGradients> {
    partial_risks(scores_p, scores_n, kind)?;
    let clean = UUCoefficients {
        a: pi_plus,
        b: 0.0,
        c: 0.0,
        d: 1.0 - pi_plus,
    };
    Ok(bracket_grads(scores_p, scores_n, kind, &clean, 1.0, 1.0))
}

/// One estimator bound to its priors, loss and correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    estimator: Estimator,
    kind: LossKind,
    pi_plus: f64,
    coeffs: UUCoefficients,
    robust: RobustConfig,
}

impl Objective {
    pub fn new(
        estimator: Estimator,
        kind: LossKind,
        priors: &ClassPriors,
        robust: RobustConfig,
    ) -> Result<Self> {
        Ok(Self {
            estimator,
            kind,
            pi_plus: priors.pi_plus(),
            coeffs: compute_coefficients(priors)?,
            robust,
        })
    }

    pub fn estimator(&self) -> Estimator {
        self.estimator
    }

    pub fn coefficients(&self) -> &UUCoefficients {
        &self.coeffs
    }

    pub fn value(&self, scores_p: &[f64], scores_n: &[f64]) -> Result<f64> {
        let pr = partial_risks(scores_p, scores_n, self.kind)?;
        Ok(match self.estimator {
            Estimator::Pn => pn_risk(&pr, self.pi_plus),
            Estimator::Uu => uu_risk(&pr, &self.coeffs),
            Estimator::RobustUu => robust_uu_risk(&pr, &self.coeffs, &self.robust),
        })
    }

    pub fn score_grads(&self, scores_p: &[f64], scores_n: &[f64]) -> Result<ScoreGradients> {
        match self.estimator {
            Estimator::Pn => pn_grad(scores_p, scores_n, self.kind, self.pi_plus),
            Estimator::Uu => uu_grad(scores_p, scores_n, self.kind, &self.coeffs),
            Estimator::RobustUu => {
                robust_uu_grad(scores_p, scores_n, self.kind, &self.coeffs, &self.robust)
            }
        }
    }
}
