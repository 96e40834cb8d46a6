//! Logistic hypothesis `h(x) = 1 / (1 + exp(-beta'x))` and its log-loss.
//!
//! Every logarithm of a score goes through [`softplus`], so evaluations stay
//! finite for margins far beyond the range of `exp`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("weights have {weights} entries but features have {features}")]
    DimensionMismatch { weights: usize, features: usize },
    #[error("label {0} is not 0 or 1")]
    BadLabel(u8),
    #[error("non-finite weight at position {0}")]
    NonFinite(usize),
}

/// Coefficients of a linear score `beta'x` (no implicit intercept).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    pub beta: Vec<f64>,
}

impl ModelWeights {
    pub fn new(beta: Vec<f64>) -> Result<Self, ModelError> {
        if let Some(j) = beta.iter().position(|b| !b.is_finite()) {
            return Err(ModelError::NonFinite(j));
        }
        Ok(Self { beta })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { beta: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// The margin `beta'x`.
    pub fn margin(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.beta.len() {
            return Err(ModelError::DimensionMismatch {
                weights: self.beta.len(),
                features: x.len(),
            });
        }
        Ok(dot(&self.beta, x))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log(1 + exp(z))` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic function, evaluated on the branch that avoids overflow.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log h = -softplus(-z)`.
#[inline]
pub fn log_sigmoid(z: f64) -> f64 {
    -softplus(-z)
}

/// `log(tau / (1 - tau))`; the margin at which the score equals `tau`.
pub fn logit(tau: f64) -> f64 {
    (tau / (1.0 - tau)).ln()
}

/// Log-loss of a margin `z` for label `y`: `softplus(-z)` if `y = 1`, `softplus(z)` otherwise.
#[inline]
pub fn margin_loss(z: f64, y: u8) -> f64 {
    if y == 1 {
        softplus(-z)
    } else {
        softplus(z)
    }
}

/// `h_beta(x)`.
pub fn sigmoid_score(beta: &ModelWeights, x: &[f64]) -> Result<f64, ModelError> {
    Ok(sigmoid(beta.margin(x)?))
}

/// `-y log h - (1 - y) log(1 - h)`.
pub fn log_loss(beta: &ModelWeights, x: &[f64], y: u8) -> Result<f64, ModelError> {
    if y > 1 {
        return Err(ModelError::BadLabel(y));
    }
    Ok(margin_loss(beta.margin(x)?, y))
}

/// `log h_beta(x)`.
pub fn log_score(beta: &ModelWeights, x: &[f64]) -> Result<f64, ModelError> {
    Ok(log_sigmoid(beta.margin(x)?))
}

/// Gradient of the log-loss in `beta`: `(h - y) x`.
pub fn log_loss_gradient(beta: &ModelWeights, x: &[f64], y: u8) -> Result<Vec<f64>, ModelError> {
    if y > 1 {
        return Err(ModelError::BadLabel(y));
    }
    let z = beta.margin(x)?;
    // h - 1 = -sigmoid(-z) keeps precision for large positive margins.
    let coef = if y == 1 { -sigmoid(-z) } else { sigmoid(z) };
    Ok(x.iter().map(|v| coef * v).collect())
}

/// Gradient of `log h_beta(x)` in `beta`: `(1 - h) x`.
pub fn log_score_gradient(beta: &ModelWeights, x: &[f64]) -> Result<Vec<f64>, ModelError> {
    let coef = sigmoid(-beta.margin(x)?);
    Ok(x.iter().map(|v| coef * v).collect())
}
