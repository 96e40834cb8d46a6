//! Validation of the Wasserstein radius.
//!
//! Each grid value is scored by its mean validation accuracy and mean
//! log-probabilistic unfairness over `k1` random sub-train/validation
//! splits. Values whose accuracy clears `baseline + threshold * (best -
//! baseline)` are shortlisted, where `baseline` is the accuracy of the best
//! constant predictor; the least unfair shortlisted value wins.

use fairdro_core::{fit_drflr, Dataset, TrainConfig};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{evaluate, DEFAULT_TAU};
use crate::split::stratified_sample;
use crate::ExperimentError;

/// Log-spaced grid of `n` points from `lo` to `hi`, both included.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && n >= 1);
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Seed for repetition `index` of the stream `tag`, derived from `base`.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(tag);
    rng.set_word_pos(2 * index as u128);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvProtocol {
    /// Candidate radii, ascending.
    pub grid: Vec<f64>,
    /// Fraction of the accuracy range above the baseline a value must reach.
    pub threshold: f64,
    /// Validation splits per grid value.
    pub k1: usize,
    /// Test resamples per outer split.
    pub k2: usize,
    /// Outer train/test splits.
    pub k3: usize,
    /// Sub-train size.
    pub n: usize,
    pub seed: u64,
}

impl Default for CvProtocol {
    fn default() -> Self {
        Self {
            grid: log_grid(5e-5, 5e-1, 50),
            threshold: 0.95,
            k1: 3,
            k2: 100,
            k3: 2,
            n: 150,
            seed: 0,
        }
    }
}

impl CvProtocol {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.grid.is_empty() {
            return Err(ExperimentError::Config("rho grid is empty".into()));
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) || self.grid.iter().any(|r| !(*r >= 0.0)) {
            return Err(ExperimentError::Config("rho grid must be nonnegative and strictly ascending".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ExperimentError::Config(format!("threshold {} is outside [0, 1]", self.threshold)));
        }
        if self.k1 == 0 || self.k2 == 0 || self.k3 == 0 {
            return Err(ExperimentError::Config("repetition counts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Validation statistics of one grid value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub rho: f64,
    pub accuracy: f64,
    pub log_prob_unf: f64,
    /// Splits whose fit failed; they are left out of the means.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub rho: f64,
    /// The shortlist was empty and the most accurate value was taken instead.
    pub fallback: bool,
    pub baseline: f64,
    pub scores: Vec<GridScore>,
}

/// Applies the shortlist rule to scored grid values.
pub fn select_rho(scores: &[GridScore], baseline: f64, threshold: f64) -> Option<(f64, bool)> {
    let valid: Vec<&GridScore> = scores.iter().filter(|s| s.accuracy.is_finite()).collect();
    let best = valid.iter().map(|s| s.accuracy).fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return None;
    }
    let cut = baseline + threshold * (best - baseline);
    let shortlisted = valid
        .iter()
        .filter(|s| s.accuracy >= cut && s.log_prob_unf.is_finite())
        .min_by(|a, b| a.log_prob_unf.total_cmp(&b.log_prob_unf));
    Some(match shortlisted {
        Some(s) if best > baseline => (s.rho, false),
        _ => {
            let top = valid.iter().find(|s| s.accuracy == best).expect("best exists");
            (top.rho, true)
        }
    })
}

/// Picks the radius for `cfg` on `train`; `cfg.ambiguity.rho` is ignored.
pub fn cross_validate_rho(train: &Dataset, protocol: &CvProtocol, cfg: &TrainConfig) -> Result<CvOutcome, ExperimentError> {
    protocol.validate()?;
    let splits: Vec<(Dataset, Dataset)> = (0..protocol.k1)
        .map(|k| stratified_sample(train, protocol.n, derive_seed(protocol.seed, 1, k as u64)))
        .collect::<Result<_, _>>()?;
    let baseline = splits
        .iter()
        .map(|(_, val)| {
            let pos = val.labels().iter().filter(|&&y| y == 1).count() as f64 / val.len() as f64;
            pos.max(1.0 - pos)
        })
        .sum::<f64>()
        / splits.len() as f64;

    let scores: Vec<GridScore> = protocol
        .grid
        .par_iter()
        .map(|&rho| {
            let mut c = *cfg;
            c.ambiguity = c.ambiguity.with_rho(rho);
            let runs: Vec<Option<(f64, f64)>> = splits
                .iter()
                .map(|(sub, val)| {
                    let fit = fit_drflr(sub, &c).ok()?;
                    let m = evaluate(val, &fit.weights, DEFAULT_TAU).ok()?;
                    Some((m.accuracy, m.log_prob_unf))
                })
                .collect();
            let ok: Vec<(f64, f64)> = runs.iter().flatten().copied().collect();
            let n = ok.len() as f64;
            let (accuracy, log_prob_unf) = if ok.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (ok.iter().map(|r| r.0).sum::<f64>() / n, ok.iter().map(|r| r.1).sum::<f64>() / n)
            };
            GridScore {
                rho,
                accuracy,
                log_prob_unf,
                failures: runs.len() - ok.len(),
            }
        })
        .collect();
    let (rho, fallback) = select_rho(&scores, baseline, protocol.threshold)
        .ok_or_else(|| ExperimentError::Numerical("every validation fit failed".into()))?;
    if fallback {
        log::warn!("empty accuracy shortlist; using the most accurate radius {rho}");
    }
    Ok(CvOutcome {
        rho,
        fallback,
        baseline,
        scores,
    })
}
