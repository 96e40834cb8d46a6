//! Estimated, actual and true Pareto frontiers in the unfairness/loss plane.
//!
//! For each penalty weight the classifier is trained on the training set.
//! The estimated frontier evaluates it on the training set and the actual
//! frontier on the test set. The true frontier, available only for
//! synthetic scenarios, trains and evaluates a fair classifier on a large
//! fresh draw standing in for the population.

use fairdro_core::{fit_drflr, fit_flr, AmbiguityConfig, Dataset, TrainConfig, UnfairnessKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{accuracy, DEFAULT_TAU};
use crate::ExperimentError;

/// Smallest penalty on the default grid.
pub const MIN_ETA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub eta: f64,
    pub train_loss: f64,
    pub train_unfairness: f64,
    pub test_loss: f64,
    pub test_unfairness: f64,
    /// Test accuracy at threshold one half.
    pub accuracy: f64,
    pub true_loss: Option<f64>,
    pub true_unfairness: Option<f64>,
}

/// One grid value; a failed fit keeps its message and the sweep continues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierEntry {
    pub eta: f64,
    pub point: Option<FrontierPoint>,
    pub error: Option<String>,
}

/// `n` equally spaced penalties from [`MIN_ETA`] to the largest admissible
/// value on `train`.
pub fn eta_grid(train: &Dataset, n: usize) -> Vec<f64> {
    let hi = train.marginal_stats().max_eta();
    if n <= 1 {
        return vec![MIN_ETA.min(hi)];
    }
    (0..n)
        .map(|k| MIN_ETA + (hi - MIN_ETA) * k as f64 / (n - 1) as f64)
        .map(|e| e.min(hi))
        .collect()
}

fn loss_and_unfairness(data: &Dataset, beta: &fairdro_core::ModelWeights) -> Result<(f64, f64), ExperimentError> {
    Ok((
        fairdro_core::training::mean_log_loss(data, beta)?,
        fairdro_core::empirical_unfairness(data, beta, UnfairnessKind::LogProbabilistic)?,
    ))
}

fn frontier_point(
    train: &Dataset,
    test: &Dataset,
    population: Option<&Dataset>,
    eta: f64,
    ambiguity: &AmbiguityConfig,
) -> Result<FrontierPoint, ExperimentError> {
    let fit = fit_drflr(train, &TrainConfig::new(eta, *ambiguity))?;
    let (train_loss, train_unfairness) = loss_and_unfairness(train, &fit.weights)?;
    let (test_loss, test_unfairness) = loss_and_unfairness(test, &fit.weights)?;
    let (true_loss, true_unfairness) = match population {
        Some(pop) => {
            let ideal = fit_flr(pop, &TrainConfig::new(eta, AmbiguityConfig::default()))?;
            let (l, u) = loss_and_unfairness(pop, &ideal.weights)?;
            (Some(l), Some(u))
        }
        None => (None, None),
    };
    Ok(FrontierPoint {
        eta,
        train_loss,
        train_unfairness,
        test_loss,
        test_unfairness,
        accuracy: accuracy(test, &fit.weights, DEFAULT_TAU)?,
        true_loss,
        true_unfairness,
    })
}

/// Sweeps `eta_grid` with the robust fit under `ambiguity` (radius zero
/// gives the fair fit).
pub fn pareto_frontier(
    train: &Dataset,
    test: &Dataset,
    eta_grid: &[f64],
    ambiguity: &AmbiguityConfig,
    population: Option<&Dataset>,
) -> Vec<FrontierEntry> {
    eta_grid
        .par_iter()
        .map(|&eta| match frontier_point(train, test, population, eta, ambiguity) {
            Ok(p) => FrontierEntry {
                eta,
                point: Some(p),
                error: None,
            },
            Err(e) => FrontierEntry {
                eta,
                point: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

/// Mean vertical distance `|test_loss - train_loss|` between the actual and
/// estimated frontiers over the successful points.
pub fn frontier_gap(entries: &[FrontierEntry]) -> Option<f64> {
    let gaps: Vec<f64> = entries
        .iter()
        .filter_map(|e| e.point.map(|p| (p.test_loss - p.train_loss).abs()))
        .collect();
    (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64)
}
