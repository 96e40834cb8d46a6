//! Test-set metrics shared by every protocol.

use fairdro_core::unfairness::{accepts, margins};
use fairdro_core::{empirical_unfairness, Dataset, ModelWeights, UnfairnessError, UnfairnessKind};
use serde::{Deserialize, Serialize};

/// Decision threshold used for accuracy and the deterministic gap.
pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub det_unf: f64,
    pub prob_unf: f64,
    pub log_prob_unf: f64,
    pub log_loss: f64,
}

impl Metrics {
    pub const FIELDS: [&'static str; 5] = ["accuracy", "det_unf", "prob_unf", "log_prob_unf", "log_loss"];

    pub fn values(&self) -> [f64; 5] {
        [self.accuracy, self.det_unf, self.prob_unf, self.log_prob_unf, self.log_loss]
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        Self {
            accuracy: v[0],
            det_unf: v[1],
            prob_unf: v[2],
            log_prob_unf: v[3],
            log_loss: v[4],
        }
    }
}

pub fn accuracy(data: &Dataset, beta: &ModelWeights, tau: f64) -> Result<f64, UnfairnessError> {
    let z = margins(data, beta)?;
    let hits = z
        .iter()
        .zip(data.labels())
        .filter(|(&z, &y)| accepts(z, tau) == (y == 1))
        .count();
    Ok(hits as f64 / data.len() as f64)
}

/// Evaluates `beta` on `data` at threshold `tau`.
pub fn evaluate(data: &Dataset, beta: &ModelWeights, tau: f64) -> Result<Metrics, UnfairnessError> {
    Ok(Metrics {
        accuracy: accuracy(data, beta, tau)?,
        det_unf: empirical_unfairness(data, beta, UnfairnessKind::Deterministic { tau })?,
        prob_unf: empirical_unfairness(data, beta, UnfairnessKind::Probabilistic)?,
        log_prob_unf: empirical_unfairness(data, beta, UnfairnessKind::LogProbabilistic)?,
        log_loss: fairdro_core::training::mean_log_loss(data, beta)?,
    })
}

/// Mean and population standard deviation of each field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Metrics,
    pub std: Metrics,
    pub count: usize,
}

pub fn summarize(runs: &[Metrics]) -> Option<Summary> {
    if runs.is_empty() {
        return None;
    }
    let n = runs.len() as f64;
    let mut mean = [0.0; 5];
    for r in runs {
        for (m, v) in mean.iter_mut().zip(r.values()) {
            *m += v / n;
        }
    }
    let mut var = [0.0; 5];
    for r in runs {
        for ((s, v), m) in var.iter_mut().zip(r.values()).zip(mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    Some(Summary {
        mean: Metrics::from_values(mean),
        std: Metrics::from_values(var.map(f64::sqrt)),
        count: runs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_fixture() {
        // Margins 2, -1 (group 1 positives), 1 (group 0 positive), -3 (negative).
        let d = Dataset::new(
            vec![vec![2.0], vec![-1.0], vec![1.0], vec![-3.0]],
            vec![1, 1, 0, 0],
            vec![1, 1, 1, 0],
        )
        .unwrap();
        let m = evaluate(&d, &ModelWeights::new(vec![1.0]).unwrap(), 0.5).unwrap();
        assert_eq!(m.accuracy, 0.75);
        assert_eq!(m.det_unf, 0.5);
    }

    #[test]
    fn single_run_has_zero_spread() {
        let m = Metrics::from_values([0.7, 0.1, 0.2, 0.3, 0.6]);
        let s = summarize(&[m]).unwrap();
        assert_eq!(s.mean, m);
        assert_eq!(s.std.values(), [0.0; 5]);
        assert!(summarize(&[]).is_none());
    }
}
