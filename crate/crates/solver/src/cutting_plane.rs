//! Kelley's cutting-plane method on a box.
//!
//! Intended for convex piecewise-linear functions of a handful of variables,
//! where the method terminates finitely: each oracle call adds the active
//! affine piece to a master LP whose optimum is a lower bound on the minimum.

use crate::lp::{solve_lp, LpInstance, Relation};

/// Solves the master problem `min s  s.t.  s >= g_j'y + c_j,  lo <= y <= hi`
/// through its dual, which has one column per cut and only `n + 1` rows.
///
/// With `y = lo + u` the dual reads
/// `max sum_j pi_j (c_j + g_j'lo) - sum_k (hi_k - lo_k) w_k`
/// subject to `sum_j pi_j = 1` and `-sum_j g_jk pi_j - w_k <= 0`, with
/// `pi, w >= 0`. The shadow prices of the second group of rows are `u`.
fn solve_master(cuts: &[(Vec<f64>, f64)], lo: &[f64], hi: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = lo.len();
    let m = cuts.len();
    let mut objective = Vec::with_capacity(m + n);
    for (g, c) in cuts {
        objective.push(c + g.iter().zip(lo).map(|(a, b)| a * b).sum::<f64>());
    }
    for k in 0..n {
        objective.push(-(hi[k] - lo[k]));
    }
    let mut lp = LpInstance::maximize(objective);
    let mut simplex_row = vec![0.0; m + n];
    simplex_row[..m].iter_mut().for_each(|v| *v = 1.0);
    lp.add_constraint(simplex_row, Relation::Eq, 1.0);
    for k in 0..n {
        let mut row = vec![0.0; m + n];
        for (j, (g, _)) in cuts.iter().enumerate() {
            row[j] = -g[k];
        }
        row[m + k] = -1.0;
        lp.add_constraint(row, Relation::Le, 0.0);
    }
    let sol = solve_lp(&lp).ok().filter(|s| s.is_optimal())?;
    let y = (0..n)
        .map(|k| (lo[k] + sol.dual[1 + k]).clamp(lo[k], hi[k]))
        .collect();
    Some((y, sol.objective))
}

#[derive(Debug, Clone, Copy)]
pub struct CuttingPlaneOptions {
    /// Stop once `upper - lower <= tol * (1 + |upper|)`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for CuttingPlaneOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iters: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuttingPlaneResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub lower_bound: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimises the convex function `oracle` over the box `[lo, hi]`.
///
/// `oracle(x, g)` returns `f(x)` and writes a subgradient into `g`. All box
/// bounds must be finite and `x0` must lie in the box.
pub fn minimize_polyhedral<F>(
    mut oracle: F,
    lo: &[f64],
    hi: &[f64],
    x0: &[f64],
    opts: &CuttingPlaneOptions,
) -> CuttingPlaneResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = lo.len();
    assert_eq!(hi.len(), n);
    assert_eq!(x0.len(), n);
    assert!(
        lo.iter().chain(hi).all(|v| v.is_finite()),
        "cutting planes need a bounded box"
    );

    let mut cuts: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut best_x = x.clone();
    let mut best = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;

    for it in 0..opts.max_iters {
        let fx = oracle(&x, &mut g);
        if fx < best {
            best = fx;
            best_x.clone_from(&x);
        }
        // Cut s >= fx + g'(y - x), stored as (g, fx - g'x).
        let offset = fx - g.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        cuts.push((g.clone(), offset));

        let Some((next, bound)) = solve_master(&cuts, lo, hi) else {
            break;
        };
        lower = lower.max(bound);
        if best - lower <= opts.tol * (1.0 + best.abs()) {
            return CuttingPlaneResult {
                x: best_x,
                value: best,
                lower_bound: lower,
                iterations: it + 1,
                converged: true,
            };
        }
        x = next;
    }
    CuttingPlaneResult {
        x: best_x,
        value: best,
        lower_bound: lower,
        iterations: opts.max_iters,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_linear_in_two_dims() {
        // |x - 0.3| + 2|y + 0.2| + max(0, x + y - 1)
        let f = |x: &[f64], g: &mut [f64]| {
            let mut v = (x[0] - 0.3).abs() + 2.0 * (x[1] + 0.2).abs();
            g[0] = (x[0] - 0.3).signum();
            g[1] = 2.0 * (x[1] + 0.2).signum();
            if x[0] + x[1] > 1.0 {
                v += x[0] + x[1] - 1.0;
                g[0] += 1.0;
                g[1] += 1.0;
            }
            v
        };
        let res = minimize_polyhedral(f, &[-5.0, -5.0], &[5.0, 5.0], &[4.0, 4.0], &Default::default());
        assert!(res.converged);
        assert!(res.value.abs() < 1e-10);
        assert!((res.x[0] - 0.3).abs() < 1e-9 && (res.x[1] + 0.2).abs() < 1e-9);
    }

    #[test]
    fn minimum_on_the_boundary() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 1.0;
            x[0]
        };
        let res = minimize_polyhedral(f, &[-2.0], &[3.0], &[1.0], &Default::default());
        assert!(res.converged);
        assert_eq!(res.x, vec![-2.0]);
    }
}
