//! Worst- and best-case unfairness of a fixed classifier over the ball.
//!
//! For a deterministic classifier with acceptance region `X1 = {h >= tau}`,
//! `V(a, a')` is the largest value of `Q[X in X1 | a, 1] - Q[X in X1 | a', 1]`
//! over distributions `Q` in the marginal-preserving ball. Since the marginal
//! is fixed, this is a worst-case expectation of a piecewise constant reward
//! and the dual has six affine pieces per sample, built from the distances
//! `d1` (to `X1`) and `d0` (to the closure of its complement).
//!
//! With both trust weights infinite the dual collapses to a continuous
//! knapsack over the positives that can be pushed across the boundary.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use fairdro_solver::{greedy_knapsack, KnapsackInstance};

use crate::data::{Cell, Dataset, MarginalStats};
use crate::dual::{DualError, MarginalDual, Piece};
use crate::metric::{kappa_serde, AmbiguityConfig, MetricError, Norm};
use crate::model::{logit, ModelError, ModelWeights};
use crate::transport::WeightedPoint;

#[derive(Debug, Error, PartialEq)]
pub enum AuditError {
    #[error("group a={0} has no positive samples (cell (a={0}, y=1) is empty), so r_a is undefined")]
    MissingPositives(u8),
    #[error("threshold {0} must lie strictly between 0 and 1")]
    BadThreshold(f64),
    #[error("the knapsack path and extremal distributions need kappa_a = kappa_y = inf")]
    FiniteKappa,
    #[error("a and a' must differ")]
    SameGroup,
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dual(#[from] DualError),
}

/// Geometry of a classifier's acceptance region `X1` and its complement `X0`.
///
/// Implement this to audit a nonlinear classifier with exact distances; see
/// [`SegmentHeuristic`] for a generic approximation.
pub trait RegionOracle {
    /// Whether `x` lies in the closed acceptance region `X1`.
    fn accepts(&self, x: &[f64]) -> bool;
    /// Distance from a point outside `X1` to `X1` (`y = 1`), or from a point
    /// of `X1` to the closure of `X0` (`y = 0`).
    fn distance(&self, x: &[f64], y: u8) -> f64;
    /// A nearest point on the decision boundary, at the distance above.
    fn project(&self, x: &[f64]) -> Vec<f64>;
}

/// Acceptance region `{x : beta'x >= logit(tau)}` of a linear score.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRegions {
    pub beta: Vec<f64>,
    pub tau: f64,
    pub norm: Norm,
    threshold: f64,
    dual_norm: f64,
    /// `v` with `beta'v = 1` and `||v|| = 1 / ||beta||_*`.
    direction: Vec<f64>,
}

impl LinearRegions {
    pub fn new(beta: &ModelWeights, tau: f64, norm: Norm) -> Result<Self, AuditError> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(AuditError::BadThreshold(tau));
        }
        let b = &beta.beta;
        let dual_norm = norm.dual_eval(b);
        let mut direction = vec![0.0; b.len()];
        if dual_norm > 0.0 {
            match norm {
                Norm::L2 => {
                    let sq: f64 = b.iter().map(|v| v * v).sum();
                    direction.iter_mut().zip(b).for_each(|(d, v)| *d = v / sq);
                }
                Norm::L1 => {
                    let j = (0..b.len()).fold(0, |m, j| if b[j].abs() > b[m].abs() { j } else { m });
                    direction[j] = 1.0 / b[j];
                }
                Norm::Linf => {
                    direction
                        .iter_mut()
                        .zip(b)
                        .for_each(|(d, v)| *d = if *v == 0.0 { 0.0 } else { v.signum() / dual_norm });
                }
            }
        }
        Ok(Self {
            beta: b.clone(),
            tau,
            norm,
            threshold: logit(tau),
            dual_norm,
            direction,
        })
    }

    /// `beta'x - logit(tau)`, snapped to zero within rounding error.
    fn margin(&self, x: &[f64]) -> f64 {
        let mut raw = -self.threshold;
        let mut scale = 1.0 + self.threshold.abs();
        for (b, v) in self.beta.iter().zip(x) {
            raw += b * v;
            scale += (b * v).abs();
        }
        if raw.abs() <= 1e-12 * scale {
            0.0
        } else {
            raw
        }
    }
}

impl RegionOracle for LinearRegions {
    fn accepts(&self, x: &[f64]) -> bool {
        self.margin(x) >= 0.0
    }

    fn distance(&self, x: &[f64], y: u8) -> f64 {
        let m = self.margin(x);
        let wrong_side = if y == 1 { m < 0.0 } else { m > 0.0 };
        if !wrong_side {
            0.0
        } else if self.dual_norm == 0.0 {
            f64::INFINITY
        } else {
            m.abs() / self.dual_norm
        }
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        let m = self.margin(x);
        if self.dual_norm == 0.0 || m == 0.0 {
            return x.to_vec();
        }
        x.iter().zip(&self.direction).map(|(v, d)| v - m * d).collect()
    }
}

/// Distance heuristic for arbitrary scores.
///
/// For a point on one side, the nearest reference point on the other side is
/// located and the boundary is found by bisection on the segment between
/// them. The result is an upper bound on the true distance.
pub struct SegmentHeuristic<F: Fn(&[f64]) -> f64> {
    pub score: F,
    pub tau: f64,
    pub norm: Norm,
    pub references: Vec<Vec<f64>>,
}

impl<F: Fn(&[f64]) -> f64> SegmentHeuristic<F> {
    fn boundary_point(&self, x: &[f64]) -> Option<Vec<f64>> {
        let inside = self.accepts(x);
        let target = self
            .references
            .iter()
            .filter(|r| self.accepts(r) != inside)
            .min_by(|a, b| self.norm.distance(x, a).total_cmp(&self.norm.distance(x, b)))?;
        // Keep `lo` on the side of x and `hi` on the other.
        let (mut lo, mut hi) = (0.0, 1.0);
        let at = |s: f64| -> Vec<f64> { x.iter().zip(target).map(|(u, v)| u + s * (v - u)).collect() };
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.accepts(&at(mid)) == inside {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // The accepting end lies in the closed region X1.
        Some(at(if inside { lo } else { hi }))
    }
}

impl<F: Fn(&[f64]) -> f64> RegionOracle for SegmentHeuristic<F> {
    fn accepts(&self, x: &[f64]) -> bool {
        (self.score)(x) >= self.tau
    }

    fn distance(&self, x: &[f64], y: u8) -> f64 {
        if self.accepts(x) == (y == 1) {
            return 0.0;
        }
        self.boundary_point(x)
            .map_or(f64::INFINITY, |b| self.norm.distance(x, &b))
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        self.boundary_point(x).unwrap_or_else(|| x.to_vec())
    }
}

/// Everything the audit programs need about a test set and classifier.
#[derive(Debug, Clone)]
pub struct AuditInstance {
    pub data: Dataset,
    pub stats: MarginalStats,
    pub ambiguity: AmbiguityConfig,
    pub tau: f64,
    /// `r_a = N / count(a, 1)`.
    pub r: [f64; 2],
    /// Membership of each test point in `X1`.
    pub accepted: Vec<bool>,
    pub d0: Vec<f64>,
    pub d1: Vec<f64>,
    pub projections: Vec<Vec<f64>>,
    /// Membership of each projection in `X1`.
    pub projection_accepted: Vec<bool>,
}

impl AuditInstance {
    pub fn new(
        data: &Dataset,
        regions: &dyn RegionOracle,
        tau: f64,
        ambiguity: AmbiguityConfig,
    ) -> Result<Self, AuditError> {
        ambiguity.validate()?;
        let stats = data.marginal_stats();
        let r0 = stats.r(0).ok_or(AuditError::MissingPositives(0))?;
        let r1 = stats.r(1).ok_or(AuditError::MissingPositives(1))?;
        let n = data.len();
        let mut accepted = Vec::with_capacity(n);
        let mut d0 = Vec::with_capacity(n);
        let mut d1 = Vec::with_capacity(n);
        let mut projections = Vec::with_capacity(n);
        let mut projection_accepted = Vec::with_capacity(n);
        for x in data.rows() {
            let inside = regions.accepts(x);
            accepted.push(inside);
            d1.push(if inside { 0.0 } else { regions.distance(x, 1) });
            d0.push(if inside { regions.distance(x, 0) } else { 0.0 });
            let proj = regions.project(x);
            projection_accepted.push(regions.accepts(&proj));
            projections.push(proj);
        }
        Ok(Self {
            data: data.clone(),
            stats,
            ambiguity,
            tau,
            r: [r0, r1],
            accepted,
            d0,
            d1,
            projections,
            projection_accepted,
        })
    }

    /// Audit of the linear classifier `1{sigmoid(beta'x) >= tau}` under the
    /// feature norm of `ambiguity`.
    pub fn linear(
        data: &Dataset,
        beta: &ModelWeights,
        tau: f64,
        ambiguity: AmbiguityConfig,
    ) -> Result<Self, AuditError> {
        if beta.dim() != data.dim() {
            return Err(ModelError::DimensionMismatch {
                weights: beta.dim(),
                features: data.dim(),
            }
            .into());
        }
        let regions = LinearRegions::new(beta, tau, ambiguity.metric.norm)?;
        Self::new(data, &regions, tau, ambiguity)
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        Self {
            ambiguity: self.ambiguity.with_rho(rho),
            ..self.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Samples on the decision boundary (`d0 = d1 = 0`); they can cross at
    /// no cost but are not movable in the knapsack.
    pub fn boundary_samples(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.d0[i] == 0.0 && self.d1[i] == 0.0)
            .collect()
    }

    fn positive_rates(&self, accepted: impl Fn(usize) -> f64) -> [f64; 2] {
        let mut acc = [0.0; 2];
        for i in 0..self.len() {
            let c = self.data.cell(i);
            if c.y == 1 {
                acc[c.a as usize] += accepted(i);
            }
        }
        [0, 1].map(|a| acc[a] / self.stats.counts[a][1] as f64)
    }

    /// `P[X in X1 | a, 1] - P[X in X1 | a', 1]` on the test sample.
    pub fn empirical_v(&self, a: u8, a_prime: u8) -> f64 {
        let rates = self.positive_rates(|i| if self.accepted[i] { 1.0 } else { 0.0 });
        rates[a as usize] - rates[a_prime as usize]
    }

    fn check_pair(a: u8, a_prime: u8) -> Result<(), AuditError> {
        if a == a_prime || a > 1 || a_prime > 1 {
            Err(AuditError::SameGroup)
        } else {
            Ok(())
        }
    }

    /// Dual pieces of sample `i` for the pair `(a, a')`; infinite costs are dropped.
    fn pieces(&self, i: usize, a: u8, a_prime: u8) -> Vec<Piece> {
        let from = self.data.cell(i);
        let metric = &self.ambiguity.metric;
        let mut out = Vec::with_capacity(6);
        for to in Cell::ALL {
            if self.stats.count(to) == 0 {
                continue;
            }
            let k = metric.cell_cost(from, to);
            if !k.is_finite() {
                continue;
            }
            let mut push = |value: f64, cost: f64| {
                if cost.is_finite() {
                    out.push(Piece { value, cost, cell: to });
                }
            };
            if to == Cell::new(a, 1) {
                push(self.r[a as usize], self.d1[i] + k);
                push(0.0, k);
            } else if to == Cell::new(a_prime, 1) {
                push(-self.r[a_prime as usize], k);
                push(0.0, self.d0[i] + k);
            } else {
                push(0.0, k);
            }
        }
        out
    }

    /// The marginal-constrained dual program behind `V(a, a')`.
    pub fn dual(&self, a: u8, a_prime: u8) -> Result<MarginalDual, AuditError> {
        let pieces = (0..self.len()).map(|i| self.pieces(i, a, a_prime)).collect();
        Ok(MarginalDual::new(
            pieces,
            self.stats.p_hat_cells(),
            self.ambiguity.rho,
            0.0,
        )?)
    }
}

/// `V(a, a')` from the dual linear program.
pub fn compute_v(inst: &AuditInstance, a: u8, a_prime: u8) -> Result<f64, AuditError> {
    AuditInstance::check_pair(a, a_prime)?;
    if inst.ambiguity.rho == 0.0 {
        return Ok(inst.empirical_v(a, a_prime));
    }
    Ok(inst.dual(a, a_prime)?.solve()?.value)
}

/// Rewards and weights of the knapsack for `(a, a')`.
fn knapsack_items(inst: &AuditInstance, a: u8, a_prime: u8) -> KnapsackInstance {
    let n = inst.len();
    let mut rewards = vec![0.0; n];
    let mut weights = vec![f64::INFINITY; n];
    for i in 0..n {
        let c = inst.data.cell(i);
        if c.y != 1 {
            continue;
        }
        if c.a == a && !inst.accepted[i] && inst.d1[i] > 0.0 {
            rewards[i] = inst.r[a as usize];
            weights[i] = inst.d1[i];
        } else if c.a == a_prime && inst.accepted[i] && inst.d0[i] > 0.0 {
            rewards[i] = inst.r[a_prime as usize];
            weights[i] = inst.d0[i];
        }
    }
    KnapsackInstance::new(rewards, weights, n as f64 * inst.ambiguity.rho)
}

/// `V(a, a')` and the knapsack solution `z*`; needs both trust weights infinite.
pub fn compute_v_knapsack(inst: &AuditInstance, a: u8, a_prime: u8) -> Result<(f64, Vec<f64>), AuditError> {
    AuditInstance::check_pair(a, a_prime)?;
    if !inst.ambiguity.metric.is_infinite() {
        return Err(AuditError::FiniteKappa);
    }
    let base = inst.empirical_v(a, a_prime);
    if inst.ambiguity.rho == 0.0 {
        return Ok((base, vec![0.0; inst.len()]));
    }
    let sol = greedy_knapsack(&knapsack_items(inst, a, a_prime));
    Ok((base + sol.value / inst.len() as f64, sol.z))
}

/// `V(a, a')` through whichever path applies.
pub fn compute_v_auto(inst: &AuditInstance, a: u8, a_prime: u8) -> Result<f64, AuditError> {
    if inst.ambiguity.metric.is_infinite() {
        Ok(compute_v_knapsack(inst, a, a_prime)?.0)
    } else {
        compute_v(inst, a, a_prime)
    }
}

/// A discrete distribution that moves fractions of samples onto the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalDistribution {
    pub a: u8,
    pub a_prime: u8,
    pub support: Vec<WeightedPoint>,
    /// Fraction of each sample moved to its projection.
    pub z_star: Vec<f64>,
    pub moved: Vec<usize>,
    /// `(1/N) sum r_a' z_i` over moved samples of group `a'`: the amount by
    /// which this witness falls short of `V(a, a')`.
    pub boundary_gap: f64,
}

impl ExtremalDistribution {
    /// `Q[X in X1 | a, 1] - Q[X in X1 | a', 1]` under this distribution.
    pub fn v_objective(&self, inst: &AuditInstance) -> f64 {
        let n = inst.len() as f64;
        let mut rates = [0.0; 2];
        for i in 0..inst.len() {
            let c = inst.data.cell(i);
            if c.y != 1 {
                continue;
            }
            let z = self.z_star[i];
            let stay = if inst.accepted[i] { 1.0 - z } else { 0.0 };
            let go = if inst.projection_accepted[i] { z } else { 0.0 };
            rates[c.a as usize] += (stay + go) / n * inst.r[c.a as usize];
        }
        rates[self.a as usize] - rates[self.a_prime as usize]
    }
}

/// Builds the extremal distribution from the knapsack solution for `(a, a')`.
pub fn extremal_distribution(inst: &AuditInstance, a: u8, a_prime: u8) -> Result<ExtremalDistribution, AuditError> {
    let (_, z) = compute_v_knapsack(inst, a, a_prime)?;
    let n = inst.len() as f64;
    let mut support = Vec::new();
    let mut moved = Vec::new();
    let mut gap = 0.0;
    for i in 0..inst.len() {
        let (x, c) = (inst.data.row(i), inst.data.cell(i));
        let zi = z[i];
        if zi < 1.0 {
            support.push(WeightedPoint::new(x.to_vec(), c.a, c.y, (1.0 - zi) / n));
        }
        if zi > 0.0 {
            support.push(WeightedPoint::new(inst.projections[i].clone(), c.a, c.y, zi / n));
            moved.push(i);
            if c.a == a_prime {
                gap += inst.r[a_prime as usize] * zi / n;
            }
        }
    }
    Ok(ExtremalDistribution {
        a,
        a_prime,
        support,
        z_star: z,
        moved,
        boundary_gap: gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnfairnessInterval {
    pub lower: f64,
    pub upper: f64,
    pub v10: f64,
    pub v01: f64,
}

impl UnfairnessInterval {
    pub fn from_values(v10: f64, v01: f64) -> Self {
        // Both values are differences of probabilities; clip rounding past 1.
        Self {
            lower: 0.0f64.max(-v10).max(-v01).min(1.0),
            upper: v10.max(v01).min(1.0),
            v10,
            v01,
        }
    }
}

/// `[lower, upper]` bounds on the deterministic unfairness over the ball.
pub fn unfairness_interval(inst: &AuditInstance) -> Result<UnfairnessInterval, AuditError> {
    let v10 = compute_v_auto(inst, 1, 0)?;
    let v01 = compute_v_auto(inst, 0, 1)?;
    Ok(UnfairnessInterval::from_values(v10, v01))
}

/// Smallest radius at which some distribution in the ball makes the
/// classifier exactly fair, found by bisection to within `tol`.
pub fn fairness_distance(inst: &AuditInstance, tol: f64) -> Result<f64, AuditError> {
    let fair_at = |rho: f64| -> Result<bool, AuditError> {
        let probe = inst.with_rho(rho);
        Ok(compute_v_auto(&probe, 1, 0)? >= -1e-12 && compute_v_auto(&probe, 0, 1)? >= -1e-12)
    };
    if fair_at(0.0)? {
        return Ok(0.0);
    }
    let n = inst.len() as f64;
    let rho_max = (0..inst.len())
        .filter(|&i| inst.data.labels()[i] == 1)
        .map(|i| inst.d0[i].max(inst.d1[i]))
        .filter(|d| d.is_finite())
        .sum::<f64>()
        / n;
    let (mut lo, mut hi) = (0.0, rho_max);
    if !fair_at(hi)? {
        // Unreachable by feature moves alone (for example a constant classifier).
        return Ok(f64::INFINITY);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if fair_at(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovedSample {
    pub index: usize,
    pub z: f64,
    pub distance: f64,
}

/// Audit report as written to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub rho: f64,
    #[serde(rename = "kappa_A", with = "kappa_serde")]
    pub kappa_a: f64,
    #[serde(rename = "kappa_Y", with = "kappa_serde")]
    pub kappa_y: f64,
    pub tau: f64,
    pub v10: f64,
    pub v01: f64,
    pub lower: f64,
    pub upper: f64,
    pub rho_hat: Option<f64>,
    pub moved: Vec<MovedSample>,
    /// Test samples lying exactly on the decision boundary.
    #[serde(default)]
    pub boundary: Vec<usize>,
}

/// Runs the full audit; `rho_hat_tol` enables the fairness distance.
pub fn audit(inst: &AuditInstance, rho_hat_tol: Option<f64>) -> Result<AuditReport, AuditError> {
    let interval = unfairness_interval(inst)?;
    let mut moved = Vec::new();
    if inst.ambiguity.metric.is_infinite() && inst.ambiguity.rho > 0.0 {
        let (a, a2) = if interval.v10 >= interval.v01 { (1, 0) } else { (0, 1) };
        let q = extremal_distribution(inst, a, a2)?;
        moved = q
            .moved
            .iter()
            .map(|&i| MovedSample {
                index: i,
                z: q.z_star[i],
                distance: inst.d0[i].max(inst.d1[i]),
            })
            .collect();
    }
    let rho_hat = rho_hat_tol.map(|tol| fairness_distance(inst, tol)).transpose()?;
    Ok(AuditReport {
        rho: inst.ambiguity.rho,
        kappa_a: inst.ambiguity.metric.kappa_a,
        kappa_y: inst.ambiguity.metric.kappa_y,
        tau: inst.tau,
        v10: interval.v10,
        v01: interval.v01,
        lower: interval.lower,
        upper: interval.upper,
        rho_hat,
        moved,
        boundary: inst.boundary_samples(),
    })
}
