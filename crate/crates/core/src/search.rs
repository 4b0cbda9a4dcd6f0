//! Hyperparameter search over the two training stages.
//!
//! Every trial trains both stages from the same base seed, so two trials
//! with identical hyperparameters give identical metrics. Trials are ranked
//! by validation accuracy (descending), then validation loss (ascending),
//! then trial index.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::Dataset;
use crate::error::{Error, Result};
use crate::pipeline::{train_model, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Grid,
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub odl_lr: Vec<f64>,
    pub odl_batch: Vec<usize>,
    /// Inclusive `(min, max, step)` grid of initial scales.
    pub scale: (f64, f64, f64),
    pub dropout: Vec<f64>,
    pub clf_lr: Vec<f64>,
    pub clf_batch: Vec<usize>,
    pub budget: usize,
    pub strategy: Strategy,
    pub seed: u64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            odl_lr: vec![1e-5, 1e-4, 1e-3, 1e-2],
            odl_batch: vec![32, 64],
            scale: (1.0, 10.0, 0.01),
            dropout: vec![0.0, 0.1, 0.3],
            clf_lr: vec![1e-3, 1e-2],
            clf_batch: vec![64, 128],
            budget: 8,
            strategy: Strategy::UniformRandom,
            seed: 0,
        }
    }
}

/// The values a single trial overrides in the base configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialParams {
    pub odl_lr: f64,
    pub odl_batch: usize,
    pub scale_init: f64,
    pub dropout: f64,
    pub clf_lr: f64,
    pub clf_batch: usize,
}

impl TrialParams {
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        c.odl.lr = self.odl_lr;
        c.odl.batch_size = self.odl_batch;
        c.odl.scale_init = self.scale_init;
        c.odl.dropout = self.dropout;
        c.clf.lr = self.clf_lr;
        c.clf.batch_size = self.clf_batch;
        c
    }

    fn named(&self) -> [(&'static str, String); 6] {
        [
            ("odl_lr", format!("{:e}", self.odl_lr)),
            ("odl_batch", self.odl_batch.to_string()),
            ("scale_init", format!("{:.2}", self.scale_init)),
            ("dropout", self.dropout.to_string()),
            ("clf_lr", format!("{:e}", self.clf_lr)),
            ("clf_batch", self.clf_batch.to_string()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: TrialParams,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub odl_val_nll: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub param: String,
    pub value: String,
    pub mean: f64,
    pub sem: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// In execution order.
    pub trials: Vec<Trial>,
    /// Indices into `trials`, best first.
    pub ranking: Vec<usize>,
    pub best: TrainConfig,
}

impl SearchSpace {
    pub fn scale_grid(&self) -> Vec<f64> {
        let (lo, hi, step) = self.scale;
        let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        // Rounded to the step's precision so 1.0 + 7·0.01 prints as 1.07.
        (0..n)
            .map(|i| ((lo + i as f64 * step) * 1e6).round() / 1e6)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi, step) = self.scale;
        if !(lo > 0.0 && hi >= lo && step > 0.0 && hi.is_finite()) {
            return Err(Error::invalid(format!(
                "bad scale range ({lo}, {hi}, {step})"
            )));
        }
        if self.odl_lr.is_empty()
            || self.odl_batch.is_empty()
            || self.dropout.is_empty()
            || self.clf_lr.is_empty()
            || self.clf_batch.is_empty()
        {
            return Err(Error::invalid("every search axis needs at least one value"));
        }
        if self.budget == 0 {
            return Err(Error::invalid("search budget must be at least 1"));
        }
        Ok(())
    }

    pub fn grid_size(&self) -> usize {
        self.odl_lr.len()
            * self.odl_batch.len()
            * self.scale_grid().len()
            * self.dropout.len()
            * self.clf_lr.len()
            * self.clf_batch.len()
    }

    fn grid_point(&self, mut i: usize, scales: &[f64]) -> TrialParams {
        let mut pick = |n: usize| {
            let v = i % n;
            i /= n;
            v
        };
        let clf_batch = self.clf_batch[pick(self.clf_batch.len())];
        let clf_lr = self.clf_lr[pick(self.clf_lr.len())];
        let dropout = self.dropout[pick(self.dropout.len())];
        let scale_init = scales[pick(scales.len())];
        let odl_batch = self.odl_batch[pick(self.odl_batch.len())];
        let odl_lr = self.odl_lr[pick(self.odl_lr.len())];
        TrialParams {
            odl_lr,
            odl_batch,
            scale_init,
            dropout,
            clf_lr,
            clf_batch,
        }
    }

    /// The trial configurations in execution order.
    ///
    /// Grid mode covers the whole grid when the budget allows and otherwise
    /// takes evenly spaced grid points; a budget larger than the grid is
    /// clamped. Random mode draws each axis independently and uniformly.
    pub fn trials(&self) -> Result<Vec<TrialParams>> {
        self.validate()?;
        let scales = self.scale_grid();
        match self.strategy {
            Strategy::Grid => {
                let size = self.grid_size();
                let n = if self.budget > size {
                    log::warn!(
                        "budget {} exceeds grid size {size}; running {size} trials",
                        self.budget
                    );
                    size
                } else {
                    self.budget
                };
                Ok((0..n)
                    .map(|t| self.grid_point(t * size / n, &scales))
                    .collect())
            }
            Strategy::UniformRandom => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                Ok((0..self.budget)
                    .map(|_| TrialParams {
                        odl_lr: *self.odl_lr.choose(&mut rng).expect("non-empty"),
                        odl_batch: *self.odl_batch.choose(&mut rng).expect("non-empty"),
                        scale_init: *scales.choose(&mut rng).expect("non-empty"),
                        dropout: *self.dropout.choose(&mut rng).expect("non-empty"),
                        clf_lr: *self.clf_lr.choose(&mut rng).expect("non-empty"),
                        clf_batch: *self.clf_batch.choose(&mut rng).expect("non-empty"),
                    })
                    .collect())
            }
        }
    }
}

/// Total order used for ranking: accuracy desc, loss asc, index asc.
pub fn rank_trials(trials: &[Trial]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..trials.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (&trials[a], &trials[b]);
        y.val_accuracy
            .total_cmp(&x.val_accuracy)
            .then(x.val_loss.total_cmp(&y.val_loss))
            .then(x.index.cmp(&y.index))
    });
    idx
}

/// Runs every trial sequentially. `on_trial` sees each record as soon as
/// it finishes, so a log can be persisted incrementally.
pub fn run_search(
    space: &SearchSpace,
    base: &TrainConfig,
    ds: &Dataset,
    mut on_trial: impl FnMut(&Trial) -> Result<()>,
) -> Result<SearchResult> {
    let params = space.trials()?;
    let mut trials = Vec::with_capacity(params.len());
    for (index, p) in params.into_iter().enumerate() {
        let start = Instant::now();
        let (_, summary) = train_model(ds, &p.apply(base))?;
        let t = Trial {
            index,
            params: p,
            val_accuracy: summary.clf.best_val_accuracy,
            val_loss: summary.clf.best_val_loss,
            odl_val_nll: summary.odl.best_val_loss,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "trial {index}: val acc {:.4} loss {:.5}",
            t.val_accuracy,
            t.val_loss
        );
        on_trial(&t)?;
        trials.push(t);
    }
    let ranking = rank_trials(&trials);
    let best = trials[ranking[0]].params.apply(base);
    Ok(SearchResult {
        trials,
        ranking,
        best,
    })
}

/// Mean ± standard error of validation accuracy for every value each
/// hyperparameter took. The standard error is 0 for single-trial groups.
pub fn sensitivity(trials: &[Trial]) -> Vec<Sensitivity> {
    let mut groups: BTreeMap<(usize, &'static str), BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for t in trials {
        for (i, (name, value)) in t.params.named().into_iter().enumerate() {
            groups
                .entry((i, name))
                .or_default()
                .entry(value)
                .or_default()
                .push(t.val_accuracy);
        }
    }
    let mut out = Vec::new();
    for ((_, name), values) in groups {
        for (value, accs) in values {
            let n = accs.len();
            let mean = accs.iter().sum::<f64>() / n as f64;
            let sem = if n > 1 {
                let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            out.push(Sensitivity {
                param: name.to_string(),
                value,
                mean,
                sem,
                n,
            });
        }
    }
    out
}

pub fn sensitivity_table(rows: &[Sensitivity]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<11} {:>10} {:>8} {:>8} {:>4}",
        "param", "value", "mean", "sem", "n"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<11} {:>10} {:>8.4} {:>8.4} {:>4}",
            r.param, r.value, r.mean, r.sem, r.n
        );
    }
    s
}

/// Appends one JSON line per trial.
pub fn append_trial(path: impl AsRef<Path>, t: &Trial) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{}", serde_json::to_string(t)?).map_err(|e| Error::io(path, e))
}
