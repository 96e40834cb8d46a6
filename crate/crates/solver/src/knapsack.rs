//! Continuous (fractional) knapsack.
//!
//! Sorting items by decreasing reward-to-weight ratio and filling greedily is
//! exact for the relaxed problem, so this runs in `O(M log M)`.

use std::cmp::Ordering;

#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackInstance {
    pub rewards: Vec<f64>,
    /// Item weights in `[0, +inf]`. Infinite weight means the item is unavailable.
    pub weights: Vec<f64>,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackSolution {
    pub z: Vec<f64>,
    pub value: f64,
    /// Budget actually consumed, `sum w_i z_i`.
    pub used: f64,
}

impl KnapsackInstance {
    pub fn new(rewards: Vec<f64>, weights: Vec<f64>, budget: f64) -> Self {
        assert_eq!(rewards.len(), weights.len(), "rewards and weights differ in length");
        Self {
            rewards,
            weights,
            budget,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Solves `max c'z  s.t.  w'z <= budget, 0 <= z <= 1` exactly.
///
/// Items with zero reward or infinite weight are never selected; zero-weight
/// items with positive reward are always taken in full. Ties in the ratio are
/// broken by ascending index, so at most one entry of `z` is fractional.
///
/// # Panics
/// If rewards are negative or NaN, weights are negative or NaN, or the budget is
/// negative or NaN.
pub fn greedy_knapsack(inst: &KnapsackInstance) -> KnapsackSolution {
    assert!(inst.budget >= 0.0, "knapsack budget must be nonnegative");
    assert_eq!(inst.rewards.len(), inst.weights.len());
    let m = inst.len();
    let mut z = vec![0.0; m];
    let mut value = 0.0;
    let mut used = 0.0;

    let mut candidates: Vec<usize> = Vec::with_capacity(m);
    for i in 0..m {
        let (c, w) = (inst.rewards[i], inst.weights[i]);
        assert!(c >= 0.0, "knapsack reward {i} is negative or NaN");
        assert!(w >= 0.0, "knapsack weight {i} is negative or NaN");
        if c == 0.0 || w == f64::INFINITY {
            continue;
        }
        if w == 0.0 {
            z[i] = 1.0;
            value += c;
        } else {
            candidates.push(i);
        }
    }
    // Compare c_i / w_i > c_j / w_j via cross products to avoid division noise.
    candidates.sort_by(|&i, &j| {
        let lhs = inst.rewards[i] * inst.weights[j];
        let rhs = inst.rewards[j] * inst.weights[i];
        rhs.partial_cmp(&lhs).unwrap_or(Ordering::Equal).then(i.cmp(&j))
    });

    let mut remaining = inst.budget;
    for i in candidates {
        if remaining <= 0.0 {
            break;
        }
        let w = inst.weights[i];
        let take = if w <= remaining { 1.0 } else { remaining / w };
        z[i] = take;
        value += take * inst.rewards[i];
        used += take * w;
        remaining -= take * w;
        if take < 1.0 {
            break;
        }
    }
    KnapsackSolution { z, value, used }
}
