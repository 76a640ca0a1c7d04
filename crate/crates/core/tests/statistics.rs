//! Statistical checks against closed-form oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal as NormalSampler};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use uu_refine::annotate::{simulate_annotator, AnnotatorSpec};
use uu_refine::data::{generate_gaussians, GaussianSpec};
use uu_refine::metrics::{accuracy, measured_priors};
use uu_refine::model::LinearScorer;
use uu_refine::priors::{estimate_priors, FewLabeledSubset, PiSource};
use uu_refine::risk::{compute_coefficients, loss, partial_risks, pn_risk, uu_risk};
use uu_refine::{ClassPriors, CorpusSplit, Label, LossKind, PseudoLabeling, DEFAULT_PRIOR_GAP_FLOOR};

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

fn gaussians(n_each: usize, shift: f64, seed: u64) -> uu_refine::Dataset {
    generate_gaussians(&GaussianSpec {
        mean_pos: vec![shift, 0.0],
        mean_neg: vec![-shift, 0.0],
        n_pos: n_each,
        n_neg: n_each,
        seed,
        ..GaussianSpec::default()
    })
    .unwrap()
}

#[test]
fn annotator_accuracy_is_binomial() {
    let ds = gaussians(5000, 1.5, 3);
    let labeling = simulate_annotator(&ds, &AnnotatorSpec::new(0.7, 0.7, 8).unwrap()).unwrap();
    let acc = accuracy(&ds, &labeling).unwrap();
    assert!((acc - 0.7).abs() < 3.0 * binomial_se(0.7, 10_000), "accuracy {acc}");
}

#[test]
fn annotator_induces_expected_corpus_priors() {
    let ds = gaussians(10_000, 1.5, 4);
    for (ap, an) in [(0.7, 0.7), (0.9, 0.6), (0.55, 0.8)] {
        let spec = AnnotatorSpec::new(ap, an, 21).unwrap();
        let split = CorpusSplit::from_labeling(&ds, &simulate_annotator(&ds, &spec).unwrap()).unwrap();
        let (tp, tn) = measured_priors(&ds, &split).unwrap();
        let (etp, etn) = spec.expected_balanced_priors();
        // independent derivation: P(y=1 | labeled +1) by Bayes' rule on balanced truth
        let oracle_tp = 0.5 * ap / (0.5 * ap + 0.5 * (1.0 - an));
        assert!((etp - oracle_tp).abs() < 1e-12);
        assert!((tp - etp).abs() < 4.0 * binomial_se(etp, split.positive().len()), "{ap}/{an}: {tp} vs {etp}");
        assert!((tn - etn).abs() < 4.0 * binomial_se(etn, split.negative().len()), "{ap}/{an}: {tn} vs {etn}");
    }
}

#[test]
fn random_split_of_balanced_data_has_half_priors() {
    let ds = gaussians(2000, 1.5, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let labels = ds
        .ids()
        .map(|id| (id, if rng.random_bool(0.5) { Label::Positive } else { Label::Negative }))
        .collect();
    let split = CorpusSplit::from_labeling(&ds, &PseudoLabeling::new(&ds, 0, labels).unwrap()).unwrap();
    let (tp, tn) = measured_priors(&ds, &split).unwrap();
    assert!((tp - 0.5).abs() < 3.0 * binomial_se(0.5, split.positive().len()));
    assert!((tn - 0.5).abs() < 3.0 * binomial_se(0.5, split.negative().len()));
}

#[test]
fn few_labeled_estimates_centre_on_measured_priors() {
    let ds = gaussians(2000, 1.5, 7);
    let labeling = simulate_annotator(&ds, &AnnotatorSpec::default()).unwrap();
    let split = CorpusSplit::from_labeling(&ds, &labeling).unwrap();
    let (tp, tn) = measured_priors(&ds, &split).unwrap();
    let reps = 300;
    let (mut sum_p, mut sum_n, mut sq_p, mut sq_n) = (0.0, 0.0, 0.0, 0.0);
    for seed in 0..reps {
        let subset = FewLabeledSubset::sample(&ds, 200, seed).unwrap();
        let p = estimate_priors(&ds, &labeling, &subset, PiSource::Mixture, DEFAULT_PRIOR_GAP_FLOOR).unwrap();
        sum_p += p.theta_p();
        sum_n += p.theta_n();
        sq_p += p.theta_p().powi(2);
        sq_n += p.theta_n().powi(2);
    }
    let r = reps as f64;
    let (mp, mn) = (sum_p / r, sum_n / r);
    let se_p = ((sq_p / r - mp * mp) / r).sqrt();
    let se_n = ((sq_n / r - mn * mn) / r).sqrt();
    assert!((mp - tp).abs() < 4.0 * se_p, "{mp} vs {tp}");
    assert!((mn - tn).abs() < 4.0 * se_n, "{mn} vs {tn}");
}

/// E[loss(s, y)] for s ~ N(mean, sd^2), by Simpson's rule over +-12 sd.
fn expected_loss(mean: f64, sd: f64, label: Label, kind: LossKind) -> f64 {
    let density = Normal::new(mean, sd).unwrap();
    let n = 4000;
    let (lo, hi) = (mean - 12.0 * sd, mean + 12.0 * sd);
    let h = (hi - lo) / n as f64;
    (0..=n)
        .map(|i| {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * density.pdf(x) * loss(x, label, kind)
        })
        .sum::<f64>()
        * h
        / 3.0
}

#[test]
fn uu_risk_matches_population_pn_risk() {
    // affine scores of isotropic Gaussians are Gaussian: mean w.mu + b, sd |w|
    let scorer = LinearScorer::from_params(2, None, vec![0.8, -0.5, 0.3]).unwrap();
    let sd = (0.8f64.powi(2) + 0.5f64.powi(2)).sqrt();
    let (m_pos, m_neg) = (0.8 * 1.5 + 0.3, -0.8 * 1.5 + 0.3);
    let (pi, theta_p, theta_n) = (0.4, 0.8, 0.3);
    let coeffs = compute_coefficients(&ClassPriors::new(pi, theta_p, theta_n).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = NormalSampler::new(0.0, 1.0).unwrap();
    let mut corpus = |theta: f64, n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                let mu = if rng.random_bool(theta) { 1.5 } else { -1.5 };
                scorer.score(&[mu + noise.sample(&mut rng), noise.sample(&mut rng)]).unwrap()
            })
            .collect()
    };
    let sp = corpus(theta_p, 200_000);
    let sn = corpus(theta_n, 200_000);
    for kind in [LossKind::Logistic, LossKind::Sigmoid] {
        let truth = pi * expected_loss(m_pos, sd, Label::Positive, kind)
            + (1.0 - pi) * expected_loss(m_neg, sd, Label::Negative, kind);
        let est = uu_risk(&partial_risks(&sp, &sn, kind).unwrap(), &coeffs);
        assert!((est - truth).abs() < 0.01, "{kind:?}: {est} vs {truth}");
    }
}

#[test]
fn bayes_accuracy_of_separated_gaussians() {
    let bayes = Normal::new(0.0, 1.0).unwrap().cdf(2.0);
    assert!((bayes - 0.9772).abs() < 1e-4);
    let ds = gaussians(5000, 2.0, 10);
    let optimal = LinearScorer::from_params(2, None, vec![1.0, 0.0, 0.0]).unwrap();
    let acc = uu_refine::metrics::scorer_accuracy(&ds, &optimal).unwrap();
    assert!((acc - bayes).abs() < 3.0 * binomial_se(bayes, ds.len()), "{acc} vs {bayes}");
}

#[test]
fn clean_population_pn_risk_agrees_with_quadrature() {
    let scorer = LinearScorer::init(2, None, 17).unwrap();
    let p = scorer.params();
    let sd = (p[0] * p[0] + p[1] * p[1]).sqrt();
    let ds = gaussians(100_000, 1.5, 12);
    let (mut sp, mut sn) = (Vec::new(), Vec::new());
    for s in ds.samples() {
        let v = scorer.score(&s.features).unwrap();
        match s.true_label.unwrap() {
            Label::Positive => sp.push(v),
            Label::Negative => sn.push(v),
        }
    }
    let kind = LossKind::Logistic;
    let est = pn_risk(&partial_risks(&sp, &sn, kind).unwrap(), 0.5);
    let truth = 0.5 * expected_loss(1.5 * p[0] + p[2], sd, Label::Positive, kind)
        + 0.5 * expected_loss(-1.5 * p[0] + p[2], sd, Label::Negative, kind);
    assert!((est - truth).abs() < 5e-3, "{est} vs {truth}");
}
