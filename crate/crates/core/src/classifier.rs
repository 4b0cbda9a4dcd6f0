//! Linear human/machine head over the latent dimension scores.
//!
//! Logits are `W_F z` with one row per class (human first, machine second)
//! and no intercept unless explicitly enabled. Training minimizes mean
//! cross-entropy plus `λ ‖W_1 + W_2‖₂`, which pulls the two rows towards
//! being negatives of each other so each column reads as signed evidence.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::Label;
use crate::error::{Error, Result};
use crate::numerics::{adam_step, fit_standardizer, log_sum_exp, sigmoid, OptState, Standardizer};

pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClfConfig {
    pub lambda: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Adds a per-class intercept. Off by default.
    pub bias: bool,
}

impl Default for ClfConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            lr: 1e-3,
            batch_size: 128,
            max_epochs: 200,
            patience: 20,
            seed: 0,
            bias: false,
        }
    }
}

impl ClfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be ≥ 0, got {}",
                self.lambda
            )));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("bad learning rate {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClfParams {
    pub num_dims: usize,
    /// `2 × K`, row-major: human row then machine row.
    pub weights: Vec<f64>,
    pub bias: Option<[f64; NUM_CLASSES]>,
    /// Training-set statistics of `z`, used by attribution only.
    pub standardizer: Standardizer,
}

impl ClfParams {
    pub fn new(human: Vec<f64>, machine: Vec<f64>, standardizer: Standardizer) -> Result<Self> {
        if human.len() != machine.len() {
            return Err(Error::Shape {
                expected: human.len(),
                actual: machine.len(),
            });
        }
        let num_dims = human.len();
        let mut weights = human;
        weights.extend(machine);
        Ok(Self {
            num_dims,
            weights,
            bias: None,
            standardizer,
        })
    }

    pub fn human_row(&self) -> &[f64] {
        &self.weights[..self.num_dims]
    }

    pub fn machine_row(&self) -> &[f64] {
        &self.weights[self.num_dims..]
    }

    /// `W_machine - W_human`, the direction of the decision margin.
    pub fn margin_weights(&self) -> Vec<f64> {
        self.machine_row()
            .iter()
            .zip(self.human_row())
            .map(|(m, h)| m - h)
            .collect()
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        if let Some(b) = self.bias {
            v.extend_from_slice(&b);
        }
        v
    }

    fn set_flat(&mut self, flat: &[f64]) {
        let n = self.weights.len();
        self.weights.copy_from_slice(&flat[..n]);
        if let Some(b) = self.bias.as_mut() {
            b.copy_from_slice(&flat[n..n + NUM_CLASSES]);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != NUM_CLASSES * self.num_dims {
            return Err(Error::Shape {
                expected: NUM_CLASSES * self.num_dims,
                actual: self.weights.len(),
            });
        }
        if self.standardizer.dim() != self.num_dims || self.standardizer.std.len() != self.num_dims
        {
            return Err(Error::Shape {
                expected: self.num_dims,
                actual: self.standardizer.dim(),
            });
        }
        if self.standardizer.std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("standardizer has non-positive std"));
        }
        if self.to_flat().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("classifier weights".into()));
        }
        Ok(())
    }
}

pub fn clf_logits(z: &[f64], p: &ClfParams) -> Result<[f64; NUM_CLASSES]> {
    if z.len() != p.num_dims {
        return Err(Error::Shape {
            expected: p.num_dims,
            actual: z.len(),
        });
    }
    let dot = |row: &[f64]| row.iter().zip(z).map(|(w, v)| w * v).sum::<f64>();
    let b = p.bias.unwrap_or([0.0; NUM_CLASSES]);
    Ok([dot(p.human_row()) + b[0], dot(p.machine_row()) + b[1]])
}

/// `‖W_1 + W_2‖₂` over a `2 × K` row-major matrix.
pub fn sym_reg(weights: &[f64]) -> f64 {
    let k = weights.len() / NUM_CLASSES;
    (0..k)
        .map(|j| {
            let s = weights[j] + weights[k + j];
            s * s
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub label: Label,
    pub prob_machine: f64,
    /// `l_machine - l_human`.
    pub margin: f64,
}

/// Ties (zero margin) resolve to human.
pub fn classify(z: &[f64], p: &ClfParams) -> Result<Decision> {
    let l = clf_logits(z, p)?;
    let margin = l[1] - l[0];
    Ok(Decision {
        label: if margin > 0.0 {
            Label::Machine
        } else {
            Label::Human
        },
        prob_machine: sigmoid(margin),
        margin,
    })
}

fn ce(logits: &[f64; NUM_CLASSES], y: Label) -> f64 {
    log_sum_exp(logits) - logits[y.index()]
}

/// Mean cross-entropy over the batch plus `λ ‖W_1 + W_2‖₂`.
pub fn clf_loss(batch: &[(Vec<f64>, Label)], p: &ClfParams, lambda: f64) -> Result<f64> {
    Ok(clf_loss_grad_impl(batch, p, lambda, false)?.0)
}

/// Loss and its gradient, laid out as the weights (then the intercept, if any).
pub fn clf_loss_grad(
    batch: &[(Vec<f64>, Label)],
    p: &ClfParams,
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    let (l, g) = clf_loss_grad_impl(batch, p, lambda, true)?;
    Ok((l, g.expect("gradient requested")))
}

fn clf_loss_grad_impl(
    batch: &[(Vec<f64>, Label)],
    p: &ClfParams,
    lambda: f64,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let k = p.num_dims;
    let n = batch.len() as f64;
    let mut grad = want_grad.then(|| vec![0.0; p.to_flat().len()]);
    let mut total = 0.0;
    for (z, y) in batch {
        let l = clf_logits(z, p)?;
        total += ce(&l, *y);
        if let Some(g) = grad.as_mut() {
            let lse = log_sum_exp(&l);
            for c in 0..NUM_CLASSES {
                let target = if c == y.index() { 1.0 } else { 0.0 };
                let d = ((l[c] - lse).exp() - target) / n;
                for j in 0..k {
                    g[c * k + j] += d * z[j];
                }
                if p.bias.is_some() {
                    g[NUM_CLASSES * k + c] += d;
                }
            }
        }
    }
    let reg = sym_reg(&p.weights);
    if let Some(g) = grad.as_mut() {
        // subgradient 0 at the kink
        if reg > 0.0 {
            for j in 0..k {
                let d = lambda * (p.weights[j] + p.weights[k + j]) / reg;
                g[j] += d;
                g[k + j] += d;
            }
        }
    }
    Ok((total / n + lambda * reg, grad))
}

pub fn accuracy(batch: &[(Vec<f64>, Label)], p: &ClfParams) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut correct = 0usize;
    for (z, y) in batch {
        if classify(z, p)?.label == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / batch.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClfEpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClfTrainingLog {
    pub epochs: Vec<ClfEpochRecord>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Fits the head on frozen scores. Keeps the epoch with the highest
/// validation accuracy, breaking ties by lower validation loss.
///
/// Weights start uniform in `±1/√K` (not at zero: from a zero start the
/// cross-entropy gradient is exactly antisymmetric across the two rows and
/// the regularizer would never be exercised).
pub fn train_clf(
    train: &[(Vec<f64>, Label)],
    val: &[(Vec<f64>, Label)],
    cfg: &ClfConfig,
) -> Result<(ClfParams, ClfTrainingLog)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid(
            "classifier needs non-empty train and validation sets",
        ));
    }
    let machines = train.iter().filter(|(_, y)| y.is_machine()).count();
    if machines == 0 || machines == train.len() {
        return Err(Error::Degenerate(
            "training set contains a single class".into(),
        ));
    }
    let k = train[0].0.len();
    if let Some((z, _)) = train.iter().chain(val).find(|(z, _)| z.len() != k) {
        return Err(Error::Shape {
            expected: k,
            actual: z.len(),
        });
    }
    let standardizer = fit_standardizer(&train.iter().map(|(z, _)| z.clone()).collect::<Vec<_>>())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bound = 1.0 / (k as f64).sqrt();
    let mut params = ClfParams {
        num_dims: k,
        weights: (0..NUM_CLASSES * k)
            .map(|_| rng.random_range(-bound..bound))
            .collect(),
        bias: cfg.bias.then_some([0.0; NUM_CLASSES]),
        standardizer,
    };
    let mut flat = params.to_flat();
    let mut state = OptState::new(flat.len());

    let score = |p: &ClfParams| -> Result<(f64, f64)> {
        Ok((accuracy(val, p)?, clf_loss(val, p, cfg.lambda)?))
    };
    let better = |a: (f64, f64), b: (f64, f64)| a.0 > b.0 || (a.0 == b.0 && a.1 < b.1);

    let mut best = params.clone();
    let mut best_score = score(&params)?;
    let mut log = ClfTrainingLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_accuracy: best_score.0,
        best_val_loss: best_score.1,
        stopped_early: false,
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(Vec<f64>, Label)> = chunk.iter().map(|&i| train[i].clone()).collect();
            let (loss, g) = clf_loss_grad(&batch, &params, cfg.lambda)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "classifier loss {loss} at epoch {epoch}"
                )));
            }
            epoch_loss += loss * batch.len() as f64;
            adam_step(&mut flat, &g, &mut state, cfg.lr)?;
            params.set_flat(&flat);
        }
        let s = score(&params)?;
        log.epochs.push(ClfEpochRecord {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            val_loss: s.1,
            val_accuracy: s.0,
        });
        log::debug!("clf epoch {epoch}: val acc {:.4} loss {:.5}", s.0, s.1);
        if better(s, best_score) {
            best_score = s;
            best = params.clone();
            log.best_epoch = epoch;
            log.best_val_accuracy = s.0;
            log.best_val_loss = s.1;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    Ok((best, log))
}
