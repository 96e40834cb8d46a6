//! Optimal transport between finitely supported distributions.

use fairdro_solver::{solve_lp, LpInstance, LpStatus, Relation};
use thiserror::Error;

use crate::metric::GroundMetric;

#[derive(Debug, Error, PartialEq)]
pub enum TransportError {
    #[error("total masses differ: {0} vs {1}")]
    MassMismatch(f64, f64),
    #[error("weight {0} is negative or not finite")]
    BadWeight(f64),
    #[error("support points have feature dimensions {0} and {1}")]
    DimensionMismatch(usize, usize),
    #[error("distribution has no support points")]
    Empty,
    #[error("transport LP did not reach optimality ({0:?})")]
    Solver(LpStatus),
}

/// A support point `(x, a, y)` with its probability mass.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPoint {
    pub x: Vec<f64>,
    pub a: u8,
    pub y: u8,
    pub weight: f64,
}

impl WeightedPoint {
    pub fn new(x: Vec<f64>, a: u8, y: u8, weight: f64) -> Self {
        Self { x, a, y, weight }
    }
}

/// Type-1 Wasserstein distance under `metric`, solved as a transport LP.
///
/// Pairs at infinite cost are excluded from the coupling; if no finite-cost
/// coupling exists the distance is `+inf`.
pub fn wasserstein_distance_discrete(
    p: &[WeightedPoint],
    q: &[WeightedPoint],
    metric: &GroundMetric,
) -> Result<f64, TransportError> {
    if p.is_empty() || q.is_empty() {
        return Err(TransportError::Empty);
    }
    let dim = p[0].x.len();
    for pt in p.iter().chain(q) {
        if !(pt.weight >= 0.0) || !pt.weight.is_finite() {
            return Err(TransportError::BadWeight(pt.weight));
        }
        if pt.x.len() != dim {
            return Err(TransportError::DimensionMismatch(dim, pt.x.len()));
        }
    }
    let mass_p: f64 = p.iter().map(|v| v.weight).sum();
    let mass_q: f64 = q.iter().map(|v| v.weight).sum();
    if (mass_p - mass_q).abs() > 1e-9 {
        return Err(TransportError::MassMismatch(mass_p, mass_q));
    }
    // Absorb rounding so the equality system is exactly consistent.
    let rescale = if mass_q > 0.0 { mass_p / mass_q } else { 1.0 };

    let mut pairs = Vec::new();
    let mut costs = Vec::new();
    for (i, u) in p.iter().enumerate() {
        for (j, v) in q.iter().enumerate() {
            let c = metric.cost(&u.x, u.a, u.y, &v.x, v.a, v.y);
            if c.is_finite() {
                pairs.push((i, j));
                costs.push(c);
            }
        }
    }
    let nv = pairs.len();
    let mut lp = LpInstance::minimize(costs);
    for (i, u) in p.iter().enumerate() {
        let mut row = vec![0.0; nv];
        for (k, &(pi, _)) in pairs.iter().enumerate() {
            if pi == i {
                row[k] = 1.0;
            }
        }
        lp.add_constraint(row, Relation::Eq, u.weight);
    }
    for (j, v) in q.iter().enumerate() {
        let mut row = vec![0.0; nv];
        for (k, &(_, qj)) in pairs.iter().enumerate() {
            if qj == j {
                row[k] = 1.0;
            }
        }
        lp.add_constraint(row, Relation::Eq, v.weight * rescale);
    }
    let sol = solve_lp(&lp).expect("transport LP is well formed");
    match sol.status {
        LpStatus::Optimal => Ok(sol.objective.max(0.0)),
        LpStatus::Infeasible => Ok(f64::INFINITY),
        s => Err(TransportError::Solver(s)),
    }
}
