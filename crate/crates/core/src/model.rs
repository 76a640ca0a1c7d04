//! The scorer `g: R^d -> R` and its seeded minibatch trainer.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ClassPriors, CorpusSplit, Dataset, Label, LossKind, PseudoLabeling, Side};
use crate::error::{Error, Result};
use crate::risk::{Estimator, Objective, RobustConfig};
use crate::seeding::{derive_seed, keyed_rng, STREAM_INIT, STREAM_TRAIN};

/// An affine map, or an affine readout over one `tanh` hidden layer.
///
/// Parameter layout for the hidden variant is input weights (row-major,
/// `hidden x dim`), input biases, output weights, output bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    dim: usize,
    hidden: Option<usize>,
    params: Vec<f64>,
}

impl LinearScorer {
    pub fn param_count(dim: usize, hidden: Option<usize>) -> usize {
        match hidden {
            None => dim + 1,
            Some(h) => h * dim + h + h + 1,
        }
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` weights, zero biases.
    pub fn init(dim: usize, hidden: Option<usize>, seed: u64) -> Result<Self> {
        check_arch(dim, hidden)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |fan_in: usize, n: usize| -> Vec<f64> {
            let s = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-s..s)).collect()
        };
        let params = match hidden {
            None => {
                let mut p = draw(dim, dim);
                p.push(0.0);
                p
            }
            Some(h) => {
                let mut p = draw(dim, h * dim);
                p.extend(std::iter::repeat_n(0.0, h));
                p.extend(draw(h, h));
                p.push(0.0);
                p
            }
        };
        Ok(Self { dim, hidden, params })
    }

    pub fn from_params(dim: usize, hidden: Option<usize>, params: Vec<f64>) -> Result<Self> {
        check_arch(dim, hidden)?;
        let expected = Self::param_count(dim, hidden);
        if params.len() != expected {
            return Err(Error::invalid(format!(
                "scorer needs {expected} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("scorer parameters must be finite"));
        }
        Ok(Self { dim, hidden, params })
    }

    pub fn zeros(dim: usize, hidden: Option<usize>) -> Result<Self> {
        Self::from_params(dim, hidden, vec![0.0; Self::param_count(dim, hidden)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> Option<usize> {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn score(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.dim {
            return Err(Error::invalid(format!(
                "scorer expects {} features, got {}",
                self.dim,
                features.len()
            )));
        }
        Ok(self.forward(features))
    }

    fn forward(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        match self.hidden {
            None => dot(&self.params[..d], x) + self.params[d],
            Some(h) => {
                let (w, rest) = self.params.split_at(h * d);
                let (c, rest) = rest.split_at(h);
                let (v, b) = rest.split_at(h);
                let mut out = b[0];
                for j in 0..h {
                    out += v[j] * (dot(&w[j * d..(j + 1) * d], x) + c[j]).tanh();
                }
                out
            }
        }
    }

    /// Adds `upstream * d g(x) / d params` into `grad`.
    fn backward(&self, x: &[f64], upstream: f64, grad: &mut [f64]) {
        let d = self.dim;
        match self.hidden {
            None => {
                for (g, xi) in grad[..d].iter_mut().zip(x) {
                    *g += upstream * xi;
                }
                grad[d] += upstream;
            }
            Some(h) => {
                let w = &self.params[..h * d];
                let c = &self.params[h * d..h * d + h];
                let v = &self.params[h * d + h..h * d + 2 * h];
                for j in 0..h {
                    let a = (dot(&w[j * d..(j + 1) * d], x) + c[j]).tanh();
                    grad[h * d + h + j] += upstream * a;
                    let back = upstream * v[j] * (1.0 - a * a);
                    for (g, xi) in grad[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *g += back * xi;
                    }
                    grad[h * d + j] += back;
                }
                grad[h * d + 2 * h] += upstream;
            }
        }
    }

    /// Indices of parameters subject to weight decay (everything but biases).
    fn is_weight(&self, i: usize) -> bool {
        let d = self.dim;
        match self.hidden {
            None => i < d,
            Some(h) => i < h * d || (h * d + h..h * d + 2 * h).contains(&i),
        }
    }
}

fn check_arch(dim: usize, hidden: Option<usize>) -> Result<()> {
    if dim == 0 {
        return Err(Error::invalid("scorer dimension must be positive"));
    }
    if hidden == Some(0) {
        return Err(Error::invalid("hidden width must be positive"));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Defaults to 0.05 for the affine scorer and 0.01 with a hidden layer.
    pub learning_rate: Option<f64>,
    pub epochs: usize,
    /// Total samples per step across both corpora.
    pub batch_size: usize,
    pub loss: LossKind,
    pub lambda: RobustConfig,
    pub estimator: Estimator,
    pub hidden: Option<usize>,
    pub seed: u64,
    pub weight_decay: f64,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: None,
            epochs: 50,
            batch_size: 64,
            loss: LossKind::Logistic,
            lambda: RobustConfig::default(),
            estimator: Estimator::RobustUu,
            hidden: None,
            seed: 0,
            weight_decay: 0.0,
            val_fraction: 0.125,
        }
    }
}

impl TrainConfig {
    pub fn effective_learning_rate(&self) -> f64 {
        self.learning_rate
            .unwrap_or(if self.hidden.is_some() { 0.01 } else { 0.05 })
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.effective_learning_rate();
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::invalid(format!("learning_rate must be positive, got {lr}")));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if self.hidden == Some(0) {
            return Err(Error::invalid("hidden width must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight_decay must be non-negative"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction <= 0.5) {
            return Err(Error::invalid(format!(
                "val_fraction must lie in (0, 0.5], got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// Index into the objective vectors; 0 is the untrained initial scorer.
    pub best_epoch: usize,
    /// Full-batch objective on the training portions, one entry per epoch
    /// plus the initial snapshot at index 0.
    pub train_objective_per_epoch: Vec<f64>,
    /// Full-batch objective on the pseudo-labeled validation portions.
    pub val_objective_per_epoch: Vec<f64>,
    pub final_scorer: LinearScorer,
}

struct Portions<'a> {
    train_p: Vec<&'a [f64]>,
    train_n: Vec<&'a [f64]>,
    val_p: Vec<&'a [f64]>,
    val_n: Vec<&'a [f64]>,
}

/// Random train/validation carve of each corpus. Each side keeps at least one
/// sample on both halves.
fn carve<'a>(
    dataset: &'a Dataset,
    split: &CorpusSplit,
    val_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Portions<'a>> {
    type Rows<'r> = Vec<&'r [f64]>;
    let mut halves = |side: Side| -> Result<(Rows<'a>, Rows<'a>)> {
        let mut ids: Vec<_> = split.corpus(side).iter().copied().collect();
        if ids.len() < 2 {
            return Err(Error::CorpusTooSmall {
                side,
                size: ids.len(),
            });
        }
        ids.shuffle(rng);
        let n_val = ((val_fraction * ids.len() as f64).round() as usize).clamp(1, ids.len() - 1);
        let feats = |id| {
            dataset
                .get(id)
                .map(|s| s.features.as_slice())
                .ok_or(Error::UnknownId(id))
        };
        let val = ids[..n_val].iter().map(|&id| feats(id)).collect::<Result<_>>()?;
        let train = ids[n_val..].iter().map(|&id| feats(id)).collect::<Result<_>>()?;
        Ok((train, val))
    };
    let (train_p, val_p) = halves(Side::Positive)?;
    let (train_n, val_n) = halves(Side::Negative)?;
    Ok(Portions {
        train_p,
        train_n,
        val_p,
        val_n,
    })
}

fn full_batch(objective: &Objective, scorer: &LinearScorer, p: &[&[f64]], n: &[&[f64]]) -> Result<f64> {
    let sp: Vec<f64> = p.iter().map(|x| scorer.forward(x)).collect();
    let sn: Vec<f64> = n.iter().map(|x| scorer.forward(x)).collect();
    objective.value(&sp, &sn)
}

/// Bounds of chunk `i` when `n` items are cut into `parts` near-equal chunks.
fn chunk(n: usize, parts: usize, i: usize) -> std::ops::Range<usize> {
    (i * n / parts)..((i + 1) * n / parts)
}

/// Minimizes the configured estimator on `split` and returns the snapshot with
/// the lowest validation objective.
///
/// Each corpus is carved into train and validation portions by
/// `val_fraction`. Every epoch visits every training sample once; a step
/// takes matching chunks of both (reshuffled) corpora, so each minibatch holds
/// roughly `batch_size * n_p / N` pseudo-positives and the rest
/// pseudo-negatives.
pub fn train(
    dataset: &Dataset,
    split: &CorpusSplit,
    priors: &ClassPriors,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    split.check_covers(dataset)?;
    let objective = Objective::new(cfg.estimator, cfg.loss, priors, cfg.lambda)?;
    let mut rng = keyed_rng(cfg.seed, STREAM_TRAIN, 0);
    let portions = carve(dataset, split, cfg.val_fraction, &mut rng)?;
    let mut scorer = LinearScorer::init(dataset.dim(), cfg.hidden, derive_seed(cfg.seed, STREAM_INIT, 0))?;
    let lr = cfg.effective_learning_rate();

    let (n_p, n_n) = (portions.train_p.len(), portions.train_n.len());
    let steps = (n_p + n_n).div_ceil(cfg.batch_size).clamp(1, n_p.min(n_n));
    let mut order_p: Vec<usize> = (0..n_p).collect();
    let mut order_n: Vec<usize> = (0..n_n).collect();
    let mut grad = vec![0.0; scorer.params.len()];
    let decays: Vec<bool> = (0..grad.len()).map(|i| scorer.is_weight(i)).collect();
    let mut batch_p: Vec<&[f64]> = Vec::with_capacity(n_p / steps + 1);
    let mut batch_n: Vec<&[f64]> = Vec::with_capacity(n_n / steps + 1);

    let mut train_obj = vec![full_batch(&objective, &scorer, &portions.train_p, &portions.train_n)?];
    let mut val_obj = vec![full_batch(&objective, &scorer, &portions.val_p, &portions.val_n)?];
    if !(train_obj[0].is_finite() && val_obj[0].is_finite()) {
        return Err(Error::Diverged { epoch: 0 });
    }
    let mut best = (0, val_obj[0], scorer.clone());

    for epoch in 1..=cfg.epochs {
        order_p.shuffle(&mut rng);
        order_n.shuffle(&mut rng);
        for step in 0..steps {
            batch_p.clear();
            batch_p.extend(order_p[chunk(n_p, steps, step)].iter().map(|&i| portions.train_p[i]));
            batch_n.clear();
            batch_n.extend(order_n[chunk(n_n, steps, step)].iter().map(|&i| portions.train_n[i]));
            let sp: Vec<f64> = batch_p.iter().map(|x| scorer.forward(x)).collect();
            let sn: Vec<f64> = batch_n.iter().map(|x| scorer.forward(x)).collect();
            let g = objective.score_grads(&sp, &sn)?;

            grad.iter_mut().for_each(|v| *v = 0.0);
            for (x, &u) in batch_p.iter().zip(&g.positive) {
                scorer.backward(x, u, &mut grad);
            }
            for (x, &u) in batch_n.iter().zip(&g.negative) {
                scorer.backward(x, u, &mut grad);
            }
            for ((p, g), &decayed) in scorer.params.iter_mut().zip(&grad).zip(&decays) {
                let decay = if decayed { cfg.weight_decay * *p } else { 0.0 };
                *p -= lr * (g + decay);
            }
        }
        if scorer.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        let t = full_batch(&objective, &scorer, &portions.train_p, &portions.train_n)?;
        let v = full_batch(&objective, &scorer, &portions.val_p, &portions.val_n)?;
        if !(t.is_finite() && v.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        train_obj.push(t);
        val_obj.push(v);
        if v < best.1 {
            best = (epoch, v, scorer.clone());
        }
    }

    Ok(TrainReport {
        best_epoch: best.0,
        train_objective_per_epoch: train_obj,
        val_objective_per_epoch: val_obj,
        final_scorer: best.2,
    })
}

/// Labels every sample by the sign of its score (zero goes to `+1`).
pub fn relabel(scorer: &LinearScorer, dataset: &Dataset, iteration: usize) -> Result<PseudoLabeling> {
    if scorer.dim() != dataset.dim() {
        return Err(Error::invalid(format!(
            "scorer dimension {} does not match dataset dimension {}",
            scorer.dim(),
            dataset.dim()
        )));
    }
    let labels = dataset
        .samples()
        .iter()
        .map(|s| (s.id, Label::from_score(scorer.forward(&s.features))))
        .collect();
    PseudoLabeling::new(dataset, iteration, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Sample;
    use approx::assert_abs_diff_eq;

    #[test]
    fn init_is_deterministic_with_expected_counts() {
        let a = LinearScorer::init(3, None, 9).unwrap();
        assert_eq!(a, LinearScorer::init(3, None, 9).unwrap());
        assert_eq!(a.params().len(), 4);
        assert_eq!(a.params()[3], 0.0);
        let h = LinearScorer::init(2, Some(8), 9).unwrap();
        assert_eq!(h.params().len(), 33);
        assert_ne!(h, LinearScorer::init(2, Some(8), 10).unwrap());
        let s = 1.0 / 2f64.sqrt();
        assert!(h.params()[..16].iter().all(|w| w.abs() < s));
        assert!(h.params()[16..24].iter().all(|&c| c == 0.0));
        let sv = 1.0 / 8f64.sqrt();
        assert!(h.params()[24..32].iter().all(|v| v.abs() < sv));
    }

    #[test]
    fn score_examples() {
        let z = LinearScorer::zeros(4, Some(3)).unwrap();
        assert_eq!(z.score(&[1.0, -2.0, 3.0, 0.5]).unwrap(), 0.0);
        let a = LinearScorer::from_params(2, None, vec![1.0, -1.0, 0.5]).unwrap();
        assert_eq!(a.score(&[2.0, 1.0]).unwrap(), 1.5);
        assert!(a.score(&[1.0]).is_err());
    }

    #[test]
    fn hidden_forward_matches_independent_reference() {
        let (d, h) = (3, 5);
        let scorer = LinearScorer::init(d, Some(h), 2).unwrap();
        // perturb biases so every parameter block participates
        let mut params = scorer.params().to_vec();
        for (k, p) in params.iter_mut().enumerate() {
            *p += 0.01 * k as f64;
        }
        let scorer = LinearScorer::from_params(d, Some(h), params.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            // written out by hand from the documented layout
            let mut expected = params[h * d + 2 * h];
            for j in 0..h {
                let mut pre = params[h * d + j];
                for i in 0..d {
                    pre += params[j * d + i] * x[i];
                }
                expected += params[h * d + h + j] * pre.tanh();
            }
            assert_abs_diff_eq!(scorer.score(&x).unwrap(), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        for hidden in [None, Some(4)] {
            let scorer = LinearScorer::init(3, hidden, 11).unwrap();
            let mut params = scorer.params().to_vec();
            for p in params.iter_mut() {
                *p += 0.1;
            }
            let scorer = LinearScorer::from_params(3, hidden, params.clone()).unwrap();
            let x = [0.3, -1.2, 0.7];
            let mut grad = vec![0.0; params.len()];
            scorer.backward(&x, 1.0, &mut grad);
            let h = 1e-6;
            for k in 0..params.len() {
                let mut up = params.clone();
                up[k] += h;
                let mut down = params.clone();
                down[k] -= h;
                let fu = LinearScorer::from_params(3, hidden, up).unwrap().score(&x).unwrap();
                let fd = LinearScorer::from_params(3, hidden, down).unwrap().score(&x).unwrap();
                assert_abs_diff_eq!((fu - fd) / (2.0 * h), grad[k], epsilon = 1e-8);
            }
        }
    }

    fn line_dataset(scores: &[f64]) -> Dataset {
        Dataset::new(
            1,
            scores
                .iter()
                .enumerate()
                .map(|(i, &s)| Sample::new(i as u64, vec![s], None))
                .collect(),
            "line",
        )
        .unwrap()
    }

    #[test]
    fn relabel_by_sign_with_positive_ties() {
        let ds = line_dataset(&[-1.5, 0.2, 3.0]);
        let ident = LinearScorer::from_params(1, None, vec![1.0, 0.0]).unwrap();
        let lab = relabel(&ident, &ds, 2).unwrap();
        let got: Vec<i8> = lab.iter().map(|(_, l)| l.as_i8()).collect();
        assert_eq!(got, vec![-1, 1, 1]);
        assert_eq!(lab.iteration(), 2);
        assert_eq!(relabel(&ident, &ds, 2).unwrap(), lab);

        let zero = LinearScorer::zeros(1, None).unwrap();
        let lab = relabel(&zero, &ds, 0).unwrap();
        assert_eq!(lab.count(Label::Positive), 3);
    }

    #[test]
    fn chunks_partition_the_range() {
        for n in [1, 5, 17, 100] {
            for parts in 1..=n.min(9) {
                let mut covered = 0;
                for i in 0..parts {
                    let r = chunk(n, parts, i);
                    assert!(!r.is_empty());
                    assert_eq!(r.start, covered);
                    covered = r.end;
                }
                assert_eq!(covered, n);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            val_fraction: 0.6,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(TrainConfig::default().effective_learning_rate(), 0.05);
        let hidden = TrainConfig {
            hidden: Some(8),
            ..TrainConfig::default()
        };
        assert_eq!(hidden.effective_learning_rate(), 0.01);
    }
}
