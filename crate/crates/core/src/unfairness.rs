//! Equal-opportunity gaps.
//!
//! For a score transform `f`, the unfairness of `h` on a sample is
//! `|mean f(h(x)) over positives with a = 1  -  mean f(h(x)) over positives with a = 0|`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::model::{log_sigmoid, logit, sigmoid, ModelError, ModelWeights};

#[derive(Debug, Error, PartialEq)]
pub enum UnfairnessError {
    #[error("unfairness is undefined: group a={0} has no positive samples")]
    EmptyGroup(u8),
    #[error("threshold {0} is outside [0, 1]")]
    BadThreshold(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum UnfairnessKind {
    /// `f(z) = 1{z >= tau}`: the gap in true-positive rates.
    Deterministic { tau: f64 },
    /// `f(z) = z`.
    Probabilistic,
    /// `f(z) = log z` (the constant offset of `1 + log z` cancels).
    LogProbabilistic,
}

impl UnfairnessKind {
    fn validate(self) -> Result<(), UnfairnessError> {
        match self {
            UnfairnessKind::Deterministic { tau } if !(0.0..=1.0).contains(&tau) => {
                Err(UnfairnessError::BadThreshold(tau))
            }
            _ => Ok(()),
        }
    }

    /// `f(h)` expressed through the margin `z = beta'x`.
    pub fn transform(self, z: f64) -> f64 {
        match self {
            UnfairnessKind::Deterministic { tau } => {
                if accepts(z, tau) {
                    1.0
                } else {
                    0.0
                }
            }
            UnfairnessKind::Probabilistic => sigmoid(z),
            UnfairnessKind::LogProbabilistic => log_sigmoid(z),
        }
    }
}

/// Whether the score `sigmoid(z)` reaches `tau`, decided on the margin scale.
pub fn accepts(z: f64, tau: f64) -> bool {
    if tau <= 0.0 {
        true
    } else if tau >= 1.0 {
        false
    } else {
        z >= logit(tau)
    }
}

/// Per-group means of `f` over positives, indexed by the sensitive attribute.
pub fn positive_group_means(
    margins: &[f64],
    sensitive: &[u8],
    labels: &[u8],
    kind: UnfairnessKind,
) -> Result<[f64; 2], UnfairnessError> {
    kind.validate()?;
    let mut sum = [0.0; 2];
    let mut count = [0usize; 2];
    for ((&z, &a), &y) in margins.iter().zip(sensitive).zip(labels) {
        if y == 1 {
            sum[a as usize] += kind.transform(z);
            count[a as usize] += 1;
        }
    }
    for a in 0..2 {
        if count[a] == 0 {
            return Err(UnfairnessError::EmptyGroup(a as u8));
        }
    }
    Ok([sum[0] / count[0] as f64, sum[1] / count[1] as f64])
}

/// Unfairness from precomputed margins.
pub fn unfairness_from_margins(
    margins: &[f64],
    sensitive: &[u8],
    labels: &[u8],
    kind: UnfairnessKind,
) -> Result<f64, UnfairnessError> {
    let m = positive_group_means(margins, sensitive, labels, kind)?;
    Ok((m[1] - m[0]).abs())
}

pub fn margins(data: &Dataset, beta: &ModelWeights) -> Result<Vec<f64>, ModelError> {
    data.rows().map(|x| beta.margin(x)).collect()
}

/// Unfairness of `h_beta` on the empirical distribution of `data`.
pub fn empirical_unfairness(
    data: &Dataset,
    beta: &ModelWeights,
    kind: UnfairnessKind,
) -> Result<f64, UnfairnessError> {
    let z = margins(data, beta)?;
    unfairness_from_margins(&z, data.sensitive(), data.labels(), kind)
}
