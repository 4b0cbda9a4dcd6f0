//! Numeric kernels shared by the scoring head and the classifier: stable
//! logistic functions, the Adam optimizer, a central-difference gradient
//! oracle and per-coordinate standardization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to standard deviations before dividing by them.
pub const STD_FLOOR: f64 = 1e-8;

/// Logistic function, evaluated through `exp(-|t|)` so it never overflows.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow for large `t` or precision loss for very negative `t`.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `ln σ(t)`.
pub fn log_sigmoid(t: f64) -> f64 {
    -softplus(-t)
}

/// `σ(a) - σ(b)` for `a > b`, in a form that keeps relative precision when
/// both values sit in the same saturated tail.
pub fn sigmoid_diff(a: f64, b: f64) -> f64 {
    sigmoid(a) * sigmoid(-b) * -(b - a).exp_m1()
}

/// Numerically stable log-sum-exp of a slice. Returns `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Moment estimates for Adam. One state per parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptState {
    /// Fresh state with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(n_params: usize) -> Self {
        Self::with_constants(n_params, 0.9, 0.999, 1e-8)
    }

    pub fn with_constants(n_params: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One bias-corrected Adam update, applied in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut OptState, lr: f64) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::Shape {
            expected: params.len(),
            actual: grads.len(),
        });
    }
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Shape {
            expected: params.len(),
            actual: state.m.len(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

/// Central-difference gradient `(f(p + h e_i) - f(p - h e_i)) / 2h`.
///
/// Used as the reference against which every analytic gradient in the crate
/// is checked.
pub fn finite_diff_grad<F>(mut f: F, params: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut p = params.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = f(&p);
        p[i] = orig - h;
        let down = f(&p);
        p[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective at coordinate {i}: f(+h) = {up}, f(-h) = {down}"
            )));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Per-coordinate mean and population standard deviation of a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(values: &[Vec<f64>]) -> Result<Self> {
        fit_standardizer(values)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        apply_standardizer(z, self)
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

pub fn fit_standardizer(values: &[Vec<f64>]) -> Result<Standardizer> {
    if values.len() < 2 {
        return Err(Error::Degenerate(format!(
            "standardizer needs at least 2 vectors, got {}",
            values.len()
        )));
    }
    let k = values[0].len();
    if let Some(bad) = values.iter().find(|v| v.len() != k) {
        return Err(Error::Shape {
            expected: k,
            actual: bad.len(),
        });
    }
    let n = values.len() as f64;
    let mut mean = vec![0.0; k];
    for v in values {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; k];
    for v in values {
        for ((s, x), m) in var.iter_mut().zip(v).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    let std = var
        .into_iter()
        .map(|s| (s / n).sqrt().max(STD_FLOOR))
        .collect();
    Ok(Standardizer { mean, std })
}

pub fn apply_standardizer(z: &[f64], s: &Standardizer) -> Result<Vec<f64>> {
    if z.len() != s.dim() {
        return Err(Error::Shape {
            expected: s.dim(),
            actual: z.len(),
        });
    }
    Ok(z.iter()
        .zip(s.mean.iter().zip(&s.std))
        .map(|(v, (m, sd))| (v - m) / sd)
        .collect())
}
