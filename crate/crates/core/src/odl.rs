//! Ordinal scoring head.
//!
//! An affine projection maps the dialogue representation `h` to one latent
//! score `z_k` per dimension. Each score becomes a distribution over `r`
//! ordered levels through a cumulative-link model with sigmoid link:
//!
//! ```text
//! C_ik       = (i - r + 2) / (2 (r - 2)) * s_k        i = 1..r-1
//! P(Y_k ≤ i) = σ(C_ik - z_k)
//! ```
//!
//! Category probabilities are consecutive differences of the cumulative
//! ones. `s_k = exp(s_raw_k)` is learned per dimension, which keeps the
//! cut-points strictly ordered for any parameter value. Note the grid is not
//! centred: for `r = 5` the cut-points are `(-2, -1, 0, 1) * s/6`.
//!
//! Training minimizes the mean over dialogues of the summed per-dimension
//! negative log-likelihood, with Adam, inverted dropout on `h`, and early
//! stopping on validation NLL.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Dataset, EmbeddingPair, LabeledExample, Split};
use crate::error::{Error, Result};
use crate::numerics::{adam_step, log_sigmoid, sigmoid, sigmoid_diff, OptState};
use crate::readout::{readout, FusionParams, ReadoutKind, ReadoutMode};
use crate::registry::NUM_DIMENSIONS;

/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdlConfig {
    pub num_dims: usize,
    pub levels: usize,
    pub dropout: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub scale_init: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub readout: ReadoutKind,
}

impl Default for OdlConfig {
    fn default() -> Self {
        Self {
            num_dims: NUM_DIMENSIONS,
            levels: 5,
            dropout: 0.3,
            lr: 1e-5,
            batch_size: 64,
            scale_init: 2.1,
            max_epochs: 200,
            patience: 10,
            seed: 0,
            readout: ReadoutKind::Fused,
        }
    }
}

impl OdlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 3 {
            return Err(Error::invalid(format!(
                "levels must be ≥ 3, got {}",
                self.levels
            )));
        }
        if self.num_dims == 0 {
            return Err(Error::invalid("num_dims must be positive"));
        }
        if !(self.scale_init > 0.0 && self.scale_init.is_finite()) {
            return Err(Error::invalid(format!(
                "scale_init must be > 0, got {}",
                self.scale_init
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
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
pub struct OdlParams {
    pub num_dims: usize,
    pub dim: usize,
    pub levels: usize,
    /// Projection matrix, `num_dims × dim`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// `ln s_k`.
    pub log_scale: Vec<f64>,
    pub readout: ReadoutMode,
}

impl OdlParams {
    pub fn zeros(
        num_dims: usize,
        dim: usize,
        levels: usize,
        scale: f64,
        readout: ReadoutMode,
    ) -> Self {
        Self {
            num_dims,
            dim,
            levels,
            weights: vec![0.0; num_dims * dim],
            bias: vec![0.0; num_dims],
            log_scale: vec![scale.ln(); num_dims],
            readout,
        }
    }

    /// Uniform `±1/√d` initialization of the projection, scales at `scale_init`.
    pub fn init(cfg: &OdlConfig, dim: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(
            cfg.num_dims,
            dim,
            cfg.levels,
            cfg.scale_init,
            ReadoutMode::from_kind(cfg.readout),
        );
        let bound = 1.0 / (dim as f64).sqrt();
        for w in p.weights.iter_mut().chain(p.bias.iter_mut()) {
            *w = rng.random_range(-bound..bound);
        }
        p
    }

    pub fn scale(&self, k: usize) -> f64 {
        self.log_scale[k].exp()
    }

    pub fn scales(&self) -> Vec<f64> {
        self.log_scale.iter().map(|s| s.exp()).collect()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.dim..(k + 1) * self.dim]
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len() + self.log_scale.len() + 2
    }

    /// Parameters as one vector: weights, bias, log-scales, then the two gate logits.
    pub fn to_flat(&self) -> Vec<f64> {
        let f = self.readout.fusion().unwrap_or_default();
        let mut v = Vec::with_capacity(self.num_params());
        v.extend_from_slice(&self.weights);
        v.extend_from_slice(&self.bias);
        v.extend_from_slice(&self.log_scale);
        v.push(f.w_first);
        v.push(f.w_last);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape {
                expected: self.num_params(),
                actual: flat.len(),
            });
        }
        let (w, rest) = flat.split_at(self.weights.len());
        let (b, rest) = rest.split_at(self.bias.len());
        let (s, g) = rest.split_at(self.log_scale.len());
        self.weights.copy_from_slice(w);
        self.bias.copy_from_slice(b);
        self.log_scale.copy_from_slice(s);
        if let ReadoutMode::Fused(f) = &mut self.readout {
            f.w_first = g[0];
            f.w_last = g[1];
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 3 {
            return Err(Error::invalid(format!(
                "levels must be ≥ 3, got {}",
                self.levels
            )));
        }
        if self.weights.len() != self.num_dims * self.dim {
            return Err(Error::Shape {
                expected: self.num_dims * self.dim,
                actual: self.weights.len(),
            });
        }
        for v in [&self.bias, &self.log_scale] {
            if v.len() != self.num_dims {
                return Err(Error::Shape {
                    expected: self.num_dims,
                    actual: v.len(),
                });
            }
        }
        if self.to_flat().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("scoring head parameters".into()));
        }
        Ok(())
    }

    /// Latent scores for one dialogue at inference time.
    pub fn scores(&self, e: &EmbeddingPair) -> Result<Vec<f64>> {
        project(&readout(e, &self.readout), self, None)
    }

    /// Most likely level per dimension for one dialogue.
    pub fn levels_for(&self, e: &EmbeddingPair) -> Result<Vec<u8>> {
        let z = self.scores(e)?;
        Ok(predict_levels(&distribution(&z, self)?))
    }
}

/// Inverted-dropout mask over the coordinates of `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
    pub keep_prob: f64,
}

impl DropoutMask {
    pub fn sample(dim: usize, rate: f64, rng: &mut impl Rng) -> Self {
        let keep_prob = 1.0 - rate;
        let keep = (0..dim)
            .map(|_| rate == 0.0 || rng.random::<f64>() < keep_prob)
            .collect();
        Self { keep, keep_prob }
    }

    pub fn all(dim: usize) -> Self {
        Self {
            keep: vec![true; dim],
            keep_prob: 1.0,
        }
    }

    fn factor(&self, j: usize) -> f64 {
        if self.keep[j] {
            1.0 / self.keep_prob
        } else {
            0.0
        }
    }
}

/// `z = W_p · (h ⊙ mask / keep_prob) + b`, or `W_p · h + b` without a mask.
pub fn project(h: &[f64], p: &OdlParams, dropout: Option<&DropoutMask>) -> Result<Vec<f64>> {
    if h.len() != p.dim {
        return Err(Error::Shape {
            expected: p.dim,
            actual: h.len(),
        });
    }
    let masked: Vec<f64>;
    let x = match dropout {
        Some(m) => {
            if m.keep.len() != p.dim {
                return Err(Error::Shape {
                    expected: p.dim,
                    actual: m.keep.len(),
                });
            }
            masked = h.iter().enumerate().map(|(j, v)| v * m.factor(j)).collect();
            &masked
        }
        None => h,
    };
    Ok((0..p.num_dims)
        .map(|k| p.row(k).iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + p.bias[k])
        .collect())
}

/// Multipliers `(i - r + 2) / (2 (r - 2))` of the scale, for `i = 1..r-1`.
pub fn cutpoint_coefficients(levels: usize) -> Result<Vec<f64>> {
    if levels < 3 {
        return Err(Error::invalid(format!(
            "cut-points need at least 3 levels, got {levels}"
        )));
    }
    let r = levels as f64;
    Ok((1..levels)
        .map(|i| (i as f64 - r + 2.0) / (2.0 * (r - 2.0)))
        .collect())
}

pub fn cutpoints(scale: f64, levels: usize) -> Result<Vec<f64>> {
    if !(scale > 0.0) {
        return Err(Error::invalid(format!(
            "scale must be positive, got {scale}"
        )));
    }
    Ok(cutpoint_coefficients(levels)?
        .into_iter()
        .map(|c| c * scale)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalDistribution {
    /// `K × r` category probabilities.
    pub cat_probs: Vec<Vec<f64>>,
    /// `K × (r-1)` cumulative probabilities `P(Y_k ≤ i)`.
    pub cum_probs: Vec<Vec<f64>>,
    pub z: Vec<f64>,
}

/// Category probabilities of one dimension given its score and scale.
pub fn level_probs(z: f64, scale: f64, levels: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let cuts = cutpoints(scale, levels)?;
    let a: Vec<f64> = cuts.iter().map(|c| c - z).collect();
    let cum: Vec<f64> = a.iter().map(|&t| sigmoid(t)).collect();
    let mut cat = Vec::with_capacity(levels);
    cat.push(cum[0]);
    for i in 1..levels - 1 {
        cat.push(sigmoid_diff(a[i], a[i - 1]));
    }
    cat.push(sigmoid(-a[levels - 2]));
    Ok((cat, cum))
}

pub fn distribution(z: &[f64], p: &OdlParams) -> Result<OrdinalDistribution> {
    if z.len() != p.num_dims {
        return Err(Error::Shape {
            expected: p.num_dims,
            actual: z.len(),
        });
    }
    let mut cat_probs = Vec::with_capacity(z.len());
    let mut cum_probs = Vec::with_capacity(z.len());
    for (k, &zk) in z.iter().enumerate() {
        let (cat, cum) = level_probs(zk, p.scale(k), p.levels)?;
        cat_probs.push(cat);
        cum_probs.push(cum);
    }
    Ok(OrdinalDistribution {
        cat_probs,
        cum_probs,
        z: z.to_vec(),
    })
}

/// Argmax level (1-based) per dimension; ties go to the lower level.
pub fn predict_levels(dist: &OrdinalDistribution) -> Vec<u8> {
    dist.cat_probs
        .iter()
        .map(|row| {
            let mut best = 0;
            for (i, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = i;
                }
            }
            (best + 1) as u8
        })
        .collect()
}

/// `ln P(Y = level)` for one dimension with its derivatives with respect to
/// the score and the scale.
///
/// Evaluated in log space: for an interior level the probability factors as
/// `σ(a_i) σ(-a_{i-1}) (1 - e^{-g})` with `g` the cut-point gap, so neither
/// the value nor the gradient suffers from cancellation in the tails.
pub(crate) fn level_log_prob(z: f64, scale: f64, level: usize, coeffs: &[f64]) -> (f64, f64, f64) {
    let r = coeffs.len() + 1;
    debug_assert!((1..=r).contains(&level));
    let a = |i: usize| coeffs[i - 1] * scale - z;
    // (ln p, ∂/∂a_upper, ∂/∂a_lower) with upper = a_level, lower = a_{level-1}
    let (lp, d_up, d_lo) = if level == 1 {
        let a1 = a(1);
        (log_sigmoid(a1), sigmoid(-a1), 0.0)
    } else if level == r {
        let al = a(r - 1);
        (log_sigmoid(-al), 0.0, -sigmoid(al))
    } else {
        let (au, al) = (a(level), a(level - 1));
        let gap = au - al;
        let inv = 1.0 / gap.exp_m1();
        (
            log_sigmoid(au) + log_sigmoid(-al) + (-(-gap).exp_m1()).ln(),
            sigmoid(-au) + inv,
            -sigmoid(al) - inv,
        )
    };
    if lp < PROB_FLOOR.ln() {
        return (PROB_FLOOR.ln(), 0.0, 0.0);
    }
    let dz = -(d_up + d_lo);
    let c_up = if level < r { coeffs[level - 1] } else { 0.0 };
    let c_lo = if level > 1 { coeffs[level - 2] } else { 0.0 };
    let ds = c_up * d_up + c_lo * d_lo;
    (lp, dz, ds)
}

/// One rated dialogue as the scoring head sees it.
#[derive(Debug, Clone, Copy)]
pub struct RatedRef<'a> {
    pub embedding: &'a EmbeddingPair,
    pub ratings: &'a [u8],
}

/// Pairs examples with their embeddings. Fails if any example lacks ratings
/// or an embedding.
pub fn rated_batch<'a>(
    ds: &'a Dataset,
    examples: impl IntoIterator<Item = &'a LabeledExample>,
) -> Result<Vec<RatedRef<'a>>> {
    examples
        .into_iter()
        .map(|ex| {
            let ratings = ex
                .ratings
                .as_deref()
                .ok_or_else(|| Error::invalid(format!("example {} has no ratings", ex.id)))?;
            let embedding = ds
                .embedding(&ex.id)
                .ok_or_else(|| Error::invalid(format!("example {} has no embedding", ex.id)))?;
            Ok(RatedRef { embedding, ratings })
        })
        .collect()
}

/// Gradient of the NLL, laid out like [`OdlParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct OdlGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub log_scale: Vec<f64>,
    pub fusion: FusionParams,
}

impl OdlGrad {
    fn zeros(p: &OdlParams) -> Self {
        Self {
            weights: vec![0.0; p.weights.len()],
            bias: vec![0.0; p.num_dims],
            log_scale: vec![0.0; p.num_dims],
            fusion: FusionParams::default(),
        }
    }

    /// Same layout as [`OdlParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.weights.len() + 2 * self.bias.len() + 2);
        v.extend_from_slice(&self.weights);
        v.extend_from_slice(&self.bias);
        v.extend_from_slice(&self.log_scale);
        v.push(self.fusion.w_first);
        v.push(self.fusion.w_last);
        v
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

fn check_ratings(r: &[u8], p: &OdlParams) -> Result<()> {
    if r.len() != p.num_dims {
        return Err(Error::Shape {
            expected: p.num_dims,
            actual: r.len(),
        });
    }
    if let Some(&bad) = r.iter().find(|&&v| v == 0 || v as usize > p.levels) {
        return Err(Error::invalid(format!(
            "rating {bad} outside 1..={}",
            p.levels
        )));
    }
    Ok(())
}

fn nll_impl(
    batch: &[RatedRef<'_>],
    p: &OdlParams,
    masks: Option<&[DropoutMask]>,
    want_grad: bool,
) -> Result<(f64, Option<OdlGrad>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let coeffs = cutpoint_coefficients(p.levels)?;
    let scales = p.scales();
    let n = batch.len() as f64;
    let mut grad = want_grad.then(|| OdlGrad::zeros(p));
    let mut total = 0.0;
    let mut dz = vec![0.0; p.num_dims];
    for (idx, s) in batch.iter().enumerate() {
        check_ratings(s.ratings, p)?;
        let h = readout(s.embedding, &p.readout);
        let mask = masks.map(|m| &m[idx]);
        let z = project(&h, p, mask)?;
        for k in 0..p.num_dims {
            let (lp, dlp_dz, dlp_ds) =
                level_log_prob(z[k], scales[k], s.ratings[k] as usize, &coeffs);
            total -= lp;
            dz[k] = -dlp_dz / n;
            if let Some(g) = grad.as_mut() {
                g.log_scale[k] -= dlp_ds * scales[k] / n;
            }
        }
        let Some(g) = grad.as_mut() else { continue };
        // x = h ⊙ mask / keep
        let factor = |j: usize| mask.map_or(1.0, |m| m.factor(j));
        let mut dh = vec![0.0; p.dim];
        for (k, &dzk) in dz.iter().enumerate() {
            g.bias[k] += dzk;
            let row = p.row(k);
            let grow = &mut g.weights[k * p.dim..(k + 1) * p.dim];
            for j in 0..p.dim {
                let fj = factor(j);
                grow[j] += dzk * h[j] * fj;
                dh[j] += dzk * row[j] * fj;
            }
        }
        if let ReadoutMode::Fused(f) = &p.readout {
            let (a1, a2) = f.coefficients();
            let e = s.embedding;
            let along: f64 = dh
                .iter()
                .enumerate()
                .map(|(j, d)| d * (e.first_mean[j] - e.last[j]))
                .sum();
            g.fusion.w_first += a1 * a2 * along;
            g.fusion.w_last -= a1 * a2 * along;
        }
    }
    Ok((total / n, grad))
}

/// Mean over the batch of the summed per-dimension negative log-likelihood.
pub fn nll(batch: &[RatedRef<'_>], p: &OdlParams) -> Result<f64> {
    Ok(nll_impl(batch, p, None, false)?.0)
}

/// Loss and analytic gradient at inference (no dropout).
pub fn nll_grad(batch: &[RatedRef<'_>], p: &OdlParams) -> Result<(f64, OdlGrad)> {
    let (l, g) = nll_impl(batch, p, None, true)?;
    Ok((l, g.expect("gradient requested")))
}

/// Loss and gradient with one dropout mask per batch element.
pub fn nll_grad_masked(
    batch: &[RatedRef<'_>],
    p: &OdlParams,
    masks: &[DropoutMask],
) -> Result<(f64, OdlGrad)> {
    if masks.len() != batch.len() {
        return Err(Error::Shape {
            expected: batch.len(),
            actual: masks.len(),
        });
    }
    let (l, g) = nll_impl(batch, p, Some(masks), true)?;
    Ok((l, g.expect("gradient requested")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdlTrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// 0 when the initial parameters were never improved upon.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Fits the scoring head on the rated training split, keeping the
/// parameters with the lowest validation NLL.
///
/// All randomness (initialization, shuffling, dropout masks) comes from one
/// ChaCha stream seeded by `cfg.seed`, so identical inputs give bitwise
/// identical parameters.
pub fn train_odl(ds: &Dataset, cfg: &OdlConfig) -> Result<(OdlParams, OdlTrainingLog)> {
    cfg.validate()?;
    if cfg.levels != ds.levels {
        return Err(Error::invalid(format!(
            "config has {} levels, dataset has {}",
            cfg.levels, ds.levels
        )));
    }
    let train = rated_batch(ds, ds.rated(Split::Train))?;
    let val = rated_batch(ds, ds.rated(Split::Val))?;
    if train.is_empty() {
        return Err(Error::invalid("no rated training examples"));
    }
    if val.is_empty() {
        return Err(Error::invalid("no rated validation examples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = OdlParams::init(cfg, ds.dim, &mut rng);
    let mut flat = params.to_flat();
    let mut state = OptState::new(flat.len());

    let mut best = params.clone();
    let mut best_val = nll(&val, &params)?;
    let mut log = OdlTrainingLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: best_val,
        stopped_early: false,
    };
    let fused = params.readout.kind() == ReadoutKind::Fused;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<RatedRef<'_>> = chunk.iter().map(|&i| train[i]).collect();
            let masks: Vec<DropoutMask> = batch
                .iter()
                .map(|_| DropoutMask::sample(params.dim, cfg.dropout, &mut rng))
                .collect();
            let (loss, grad) = nll_grad_masked(&batch, &params, &masks)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss {loss} at epoch {epoch}, batch {bi}"
                )));
            }
            epoch_loss += loss * batch.len() as f64;
            let mut g = grad.to_flat();
            if !fused {
                let n = g.len();
                g[n - 2] = 0.0;
                g[n - 1] = 0.0;
            }
            adam_step(&mut flat, &g, &mut state, cfg.lr)?;
            params.set_flat(&flat)?;
        }
        let val_loss = nll(&val, &params)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "validation loss {val_loss} at epoch {epoch}"
            )));
        }
        let train_loss = epoch_loss / train.len() as f64;
        log::debug!("odl epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best = params.clone();
            log.best_epoch = epoch;
            log.best_val_loss = val_loss;
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
