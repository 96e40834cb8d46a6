//! Dual of a worst-case expectation over a marginal-preserving ball.
//!
//! For a reward `phi(x, a, y)`, the supremum of `E_Q[phi]` over distributions
//! `Q` within transport budget `rho` of the empirical one and with the same
//! `(A, Y)` marginal equals
//!
//! ```text
//! min_{lambda >= lambda_min, mu}  rho * lambda + sum_c p_c mu_c
//!                                 + (1/N) sum_i max_k (v_ik - c_ik lambda - mu_{cell_ik})
//! ```
//!
//! where sample `i` contributes a finite list of pieces `(v, c, cell)`: the
//! best reward reachable in `cell` at transport cost `c`. Both the training
//! and the audit programs reduce to this form once the supremum over features
//! is taken in closed form.
//!
//! The shift `mu -> mu + s`, `nu -> nu - s` leaves the objective unchanged
//! because `sum_c p_c = 1`, and more generally one `mu` per connected group
//! of cells is free, so those entries are pinned to zero.

use fairdro_solver::{
    assign_to_bins, minimize_convex, minimize_polyhedral, solve_lp, ConvexProblem, CuttingPlaneOptions, LpInstance,
    Relation, StepRule, SubgradientOptions,
};
use thiserror::Error;

use crate::data::Cell;

/// Samples above which the inner transport problem is solved as a bin
/// assignment rather than by the dense simplex.
const LP_SAMPLE_LIMIT: usize = 60;

/// Cap on tangent steps of the parametric LP; each step passes a breakpoint.
const MAX_BREAKPOINT_STEPS: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum DualError {
    #[error("sample {0} has no pieces")]
    NoPieces(usize),
    #[error("non-finite piece data at sample {0}")]
    NonFinite(usize),
    #[error("dual solver failed to converge")]
    NotConverged,
}

/// One affine piece `value - cost * lambda - mu[cell]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub value: f64,
    pub cost: f64,
    pub cell: Cell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualMethod {
    Lp,
    CuttingPlane,
    Subgradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub value: f64,
    pub lambda: f64,
    /// Indexed like [`Cell::ALL`].
    pub mu: [f64; 4],
    pub nu: Vec<f64>,
    pub method: DualMethod,
}

#[derive(Debug, Clone)]
pub struct MarginalDual {
    pub pieces: Vec<Vec<Piece>>,
    /// Empirical cell probabilities, indexed like [`Cell::ALL`].
    pub p_hat: [f64; 4],
    pub rho: f64,
    pub lambda_min: f64,
}

impl MarginalDual {
    pub fn new(pieces: Vec<Vec<Piece>>, p_hat: [f64; 4], rho: f64, lambda_min: f64) -> Result<Self, DualError> {
        for (i, ps) in pieces.iter().enumerate() {
            if ps.is_empty() {
                return Err(DualError::NoPieces(i));
            }
            if ps.iter().any(|p| !p.value.is_finite() || !p.cost.is_finite() || p.cost < 0.0) {
                return Err(DualError::NonFinite(i));
            }
        }
        Ok(Self {
            pieces,
            p_hat,
            rho,
            lambda_min,
        })
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Cells whose `mu` is pinned to zero: one representative per group of
    /// cells connected by some piece, plus cells that no piece touches.
    pub fn pinned_cells(&self) -> [bool; 4] {
        let mut parent = [0usize, 1, 2, 3];
        fn find(p: &mut [usize; 4], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            p[i] = r;
            r
        }
        let mut touched = [false; 4];
        for ps in &self.pieces {
            let first = ps[0].cell.index();
            for p in ps {
                let c = p.cell.index();
                touched[c] = true;
                let (ra, rb) = (find(&mut parent, first), find(&mut parent, c));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        let mut pinned = [false; 4];
        for c in 0..4 {
            pinned[c] = !touched[c] || find(&mut parent, c) == c;
        }
        pinned
    }

    /// Objective value at `(lambda, mu)` plus a subgradient.
    pub fn evaluate(&self, lambda: f64, mu: &[f64; 4]) -> (f64, f64, [f64; 4]) {
        let n = self.len() as f64;
        let mut value = self.rho * lambda;
        let mut g_lambda = self.rho;
        let mut g_mu = self.p_hat;
        for c in 0..4 {
            value += self.p_hat[c] * mu[c];
        }
        for ps in &self.pieces {
            let (best, k) = best_piece(ps, lambda, mu);
            value += best / n;
            g_lambda -= ps[k].cost / n;
            g_mu[ps[k].cell.index()] -= 1.0 / n;
        }
        (value, g_lambda, g_mu)
    }

    fn nu(&self, lambda: f64, mu: &[f64; 4]) -> Vec<f64> {
        self.pieces.iter().map(|ps| best_piece(ps, lambda, mu).0).collect()
    }

    /// Exact parametric solution, with cutting planes as a fallback.
    pub fn solve(&self) -> Result<DualSolution, DualError> {
        if let Some(sol) = self.solve_lp() {
            return Ok(sol);
        }
        log::warn!("parametric dual failed; falling back to cutting planes");
        self.solve_cutting_plane()
    }

    /// Exact solution through linear programming, parametric in `lambda`.
    ///
    /// For a fixed price the budget row drops out and what remains is a
    /// transport LP from samples to cells with a 0/1 constraint matrix, so
    /// costs spanning many decades never enter a pivot. The outer problem
    /// `rho * lambda + T(lambda)` is convex and piecewise linear; tangent
    /// intersections walk its breakpoints and stop at the exact kink.
    pub fn solve_lp(&self) -> Option<DualSolution> {
        let (vmin, vmax, cmin, _) = self.ranges();
        let eval = |lambda: f64| -> Option<(f64, f64, TransportPoint)> {
            let t = self.transport_at(lambda)?;
            Some((self.rho * lambda + t.value, self.rho - t.usage, t))
        };
        let mut lo = (self.lambda_min, eval(self.lambda_min)?);
        let mut best = lo;
        if lo.1 .1 >= 0.0 {
            return Some(self.lp_solution(best.0, best.1 .2));
        }
        let mut span = 2.0 * (vmax - vmin).max(1e-12) / cmin + 1.0;
        let mut hi = (self.lambda_min + span, eval(self.lambda_min + span)?);
        while hi.1 .1 < 0.0 {
            span *= 4.0;
            if !span.is_finite() {
                return None;
            }
            hi = (self.lambda_min + span, eval(self.lambda_min + span)?);
        }
        if hi.1 .0 < best.1 .0 {
            best = hi;
        }
        for _ in 0..MAX_BREAKPOINT_STEPS {
            let ((l0, (g0, s0, _)), (l1, (g1, s1, _))) = (&lo, &hi);
            if s1 - s0 <= 0.0 {
                break;
            }
            // Where the two tangents meet.
            let mid = (g1 - g0 + s0 * l0 - s1 * l1) / (s0 - s1);
            if !(mid > *l0 && mid < *l1) {
                break;
            }
            let floor = g0 + s0 * (mid - l0);
            let point = (mid, eval(mid)?);
            let (g, slope, _) = point.1;
            if g < best.1 .0 {
                best = point;
            }
            if g <= floor + 1e-13 * (1.0 + g.abs()) || slope == 0.0 {
                break;
            }
            if slope < 0.0 {
                lo = point;
            } else {
                hi = point;
            }
        }
        Some(self.lp_solution(best.0, best.1 .2))
    }

    fn lp_solution(&self, lambda: f64, t: TransportPoint) -> DualSolution {
        DualSolution {
            value: self.rho * lambda + t.value,
            lambda,
            mu: t.mu,
            nu: self.nu(lambda, &t.mu),
            method: DualMethod::Lp,
        }
    }

    /// Best piece into each cell at price `lambda`: `(sample, cell, weight, cost)`.
    fn columns_at(&self, lambda: f64) -> Vec<(usize, usize, f64, f64)> {
        let mut columns = Vec::new();
        for (i, ps) in self.pieces.iter().enumerate() {
            for c in 0..4 {
                let best = ps
                    .iter()
                    .filter(|p| p.cell.index() == c)
                    .map(|p| (p.value - p.cost * lambda, p.cost))
                    .fold(None, |acc: Option<(f64, f64)>, (w, cost)| match acc {
                        Some((bw, bc)) if bw > w || (bw == w && bc <= cost) => Some((bw, bc)),
                        _ => Some((w, cost)),
                    });
                if let Some((w, cost)) = best {
                    columns.push((i, c, w, cost));
                }
            }
        }
        columns
    }

    /// Cell capacities in sample counts, so every right-hand side is an exact integer.
    fn capacities(&self) -> [usize; 4] {
        let n = self.len() as f64;
        self.p_hat.map(|p| (p * n).round() as usize)
    }

    /// Best transport plan at price `lambda`: the dense simplex for small
    /// instances, the exact bin assignment otherwise.
    fn transport_at(&self, lambda: f64) -> Option<TransportPoint> {
        if self.len() <= LP_SAMPLE_LIMIT {
            self.transport_simplex(lambda)
        } else {
            self.transport_assignment(lambda)
        }
    }

    fn transport_simplex(&self, lambda: f64) -> Option<TransportPoint> {
        let n = self.len() as f64;
        let columns = self.columns_at(lambda);
        let caps = self.capacities();
        let mut lp = LpInstance::maximize(columns.iter().map(|col| col.2).collect());
        let mut cell_rows = Vec::new();
        for c in 0..4 {
            if columns.iter().any(|col| col.1 == c) {
                let row = columns.iter().map(|col| if col.1 == c { 1.0 } else { 0.0 }).collect();
                cell_rows.push((c, lp.constraints.len()));
                lp.add_constraint(row, Relation::Eq, caps[c] as f64);
            }
        }
        for i in 0..self.len() {
            let row = columns.iter().map(|col| if col.0 == i { 1.0 } else { 0.0 }).collect();
            lp.add_constraint(row, Relation::Eq, 1.0);
        }
        let sol = solve_lp(&lp).ok()?;
        if !sol.is_optimal() || sol.primal_infeasibility > 1e-9 {
            return None;
        }
        let usage = columns.iter().zip(&sol.primal).map(|(col, x)| col.3 * x).sum::<f64>() / n;
        let mut mu = [0.0; 4];
        for &(c, row) in &cell_rows {
            mu[c] = sol.dual[row];
        }
        Some(TransportPoint {
            value: sol.objective / n,
            usage,
            mu,
        })
    }

    fn transport_assignment(&self, lambda: f64) -> Option<TransportPoint> {
        let n = self.len() as f64;
        let mut gains = vec![vec![f64::NEG_INFINITY; 4]; self.len()];
        let mut costs = vec![[0.0; 4]; self.len()];
        for (i, c, w, cost) in self.columns_at(lambda) {
            gains[i][c] = w;
            costs[i][c] = cost;
        }
        let plan = assign_to_bins(&gains, &self.capacities())?;
        let usage = plan.bin.iter().enumerate().map(|(i, &c)| costs[i][c]).sum::<f64>() / n;
        Some(TransportPoint {
            value: plan.value / n,
            usage,
            mu: [plan.price[0], plan.price[1], plan.price[2], plan.price[3]],
        })
    }

    /// Kelley cutting planes over `(lambda, free mu)` with an expanding box.
    pub fn solve_cutting_plane(&self) -> Result<DualSolution, DualError> {
        let pinned = self.pinned_cells();
        let free: Vec<usize> = (0..4).filter(|&c| !pinned[c]).collect();
        let (vmin, vmax, cmin, cmax) = self.ranges();
        let vrange = (vmax - vmin).max(1e-12);
        let mut lambda_span = 2.0 * vrange / cmin + 1.0;
        let mut mu_half = vrange + (self.lambda_min + lambda_span) * cmax + 1.0;
        let mut previous: Option<f64> = None;
        let mut x0 = vec![self.lambda_min + 0.5 * lambda_span];
        x0.extend(free.iter().map(|_| 0.0));

        for _ in 0..40 {
            let mut lo = vec![self.lambda_min];
            let mut hi = vec![self.lambda_min + lambda_span];
            lo.extend(free.iter().map(|_| -mu_half));
            hi.extend(free.iter().map(|_| mu_half));
            for (v, (l, h)) in x0.iter_mut().zip(lo.iter().zip(&hi)) {
                *v = v.clamp(*l, *h);
            }
            let oracle = |x: &[f64], g: &mut [f64]| {
                let mu = expand_mu(&free, &x[1..]);
                let (v, gl, gm) = self.evaluate(x[0], &mu);
                g[0] = gl;
                for (k, &c) in free.iter().enumerate() {
                    g[1 + k] = gm[c];
                }
                v
            };
            let res = minimize_polyhedral(oracle, &lo, &hi, &x0, &CuttingPlaneOptions {
                tol: 1e-12,
                max_iters: 2_000,
            });
            if !res.converged {
                return Err(DualError::NotConverged);
            }
            let at_edge = (res.x[0] - hi[0]).abs() <= 1e-9 * (1.0 + hi[0].abs())
                || res.x[1..].iter().any(|v| (v.abs() - mu_half).abs() <= 1e-9 * (1.0 + mu_half));
            let improved = previous.is_none_or(|p| res.value < p - 1e-12 * (1.0 + p.abs()));
            if !at_edge || !improved {
                let lambda = res.x[0];
                let mu = expand_mu(&free, &res.x[1..]);
                return Ok(DualSolution {
                    value: res.value,
                    lambda,
                    mu,
                    nu: self.nu(lambda, &mu),
                    method: DualMethod::CuttingPlane,
                });
            }
            previous = Some(res.value);
            x0 = res.x;
            lambda_span *= 4.0;
            mu_half *= 4.0;
        }
        Err(DualError::NotConverged)
    }

    /// Projected subgradient method on the same objective; used as an
    /// independent cross-check of the other two paths.
    pub fn solve_subgradient(&self, max_iters: usize) -> DualSolution {
        struct Problem<'a> {
            dual: &'a MarginalDual,
            free: Vec<usize>,
        }
        impl ConvexProblem for Problem<'_> {
            fn dim(&self) -> usize {
                1 + self.free.len()
            }
            fn evaluate(&self, x: &[f64], g: &mut [f64]) -> f64 {
                let mu = expand_mu(&self.free, &x[1..]);
                let (v, gl, gm) = self.dual.evaluate(x[0], &mu);
                g[0] = gl;
                for (k, &c) in self.free.iter().enumerate() {
                    g[1 + k] = gm[c];
                }
                v
            }
            fn project(&self, x: &mut [f64]) {
                x[0] = x[0].max(self.dual.lambda_min);
            }
            fn initial_point(&self) -> Vec<f64> {
                let mut x = vec![self.dual.lambda_min + 1.0];
                x.extend(self.free.iter().map(|_| 0.0));
                x
            }
        }
        let pinned = self.pinned_cells();
        let prob = Problem {
            dual: self,
            free: (0..4).filter(|&c| !pinned[c]).collect(),
        };
        let opts = SubgradientOptions {
            tol: 1e-13,
            max_iters,
            step: StepRule::TargetLevel { initial_gap: None },
        };
        let (x, value, _) = minimize_convex(&prob, &opts);
        let mu = expand_mu(&prob.free, &x[1..]);
        DualSolution {
            value,
            lambda: x[0],
            mu,
            nu: self.nu(x[0], &mu),
            method: DualMethod::Subgradient,
        }
    }

    /// (min value, max value, min positive cost, max cost) over all pieces.
    fn ranges(&self) -> (f64, f64, f64, f64) {
        let mut vmin = f64::INFINITY;
        let mut vmax = f64::NEG_INFINITY;
        let mut cmin = f64::INFINITY;
        let mut cmax: f64 = 0.0;
        for p in self.pieces.iter().flatten() {
            vmin = vmin.min(p.value);
            vmax = vmax.max(p.value);
            if p.cost > 0.0 {
                cmin = cmin.min(p.cost);
            }
            cmax = cmax.max(p.cost);
        }
        if !cmin.is_finite() {
            cmin = 1.0;
        }
        (vmin, vmax, cmin, cmax)
    }
}

fn expand_mu(free: &[usize], values: &[f64]) -> [f64; 4] {
    let mut mu = [0.0; 4];
    for (&c, &v) in free.iter().zip(values) {
        mu[c] = v;
    }
    mu
}

/// Transport plan at a fixed price: value and budget use per sample.
#[derive(Debug, Clone, Copy)]
struct TransportPoint {
    value: f64,
    usage: f64,
    mu: [f64; 4],
}

/// Largest piece at `(lambda, mu)`; ties go to the lowest index.
#[inline]
fn best_piece(ps: &[Piece], lambda: f64, mu: &[f64; 4]) -> (f64, usize) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (k, p) in ps.iter().enumerate() {
        let v = p.value - p.cost * lambda - mu[p.cell.index()];
        if v > best {
            best = v;
            arg = k;
        }
    }
    (best, arg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn piece(value: f64, cost: f64, a: u8, y: u8) -> Piece {
        Piece {
            value,
            cost,
            cell: Cell::new(a, y),
        }
    }

    /// Two samples in different cells; one may move to the other's cell at cost 1.
    fn small() -> MarginalDual {
        MarginalDual::new(
            vec![
                vec![piece(0.0, 0.0, 0, 0), piece(2.0, 1.0, 0, 1), piece(1.0, 0.5, 0, 0)],
                vec![piece(1.0, 0.0, 0, 1), piece(0.0, 2.0, 0, 0)],
            ],
            [0.5, 0.5, 0.0, 0.0],
            0.2,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn pinning_follows_connectivity() {
        let d = small();
        assert_eq!(d.pinned_cells(), [true, false, true, true]);
        let iso = MarginalDual::new(
            vec![vec![piece(0.0, 0.0, 0, 0)], vec![piece(1.0, 0.0, 1, 1)]],
            [0.5, 0.0, 0.0, 0.5],
            0.1,
            0.0,
        )
        .unwrap();
        assert_eq!(iso.pinned_cells(), [true, true, true, true]);
    }

    #[test]
    fn three_paths_agree() {
        let d = small();
        let lp = d.solve_lp().unwrap();
        let cp = d.solve_cutting_plane().unwrap();
        let sg = d.solve_subgradient(100_000);
        assert!((lp.value - cp.value).abs() < 1e-10, "{} {}", lp.value, cp.value);
        assert!((lp.value - sg.value).abs() < 1e-7, "{} {}", lp.value, sg.value);
    }

    #[test]
    fn zero_radius_returns_stay_values() {
        // Without budget every sample keeps its own-cell reward.
        let mut d = small();
        d.rho = 0.0;
        let lp = d.solve_lp().unwrap();
        let cp = d.solve_cutting_plane().unwrap();
        assert!((lp.value - 0.5).abs() < 1e-10, "{}", lp.value);
        assert!((cp.value - 0.5).abs() < 1e-10, "{}", cp.value);
    }

    /// Each sample stays at cost zero or jumps to random cells at random cost.
    fn random_dual(seed: u64, n: usize, rho: f64) -> MarginalDual {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut counts = [0.0; 4];
        let pieces = (0..n)
            .map(|i| {
                let home = Cell::ALL[i % 4];
                counts[home.index()] += 1.0;
                let mut ps = vec![Piece {
                    value: rng.random_range(0.0..1.0),
                    cost: 0.0,
                    cell: home,
                }];
                for _ in 0..rng.random_range(0..4) {
                    ps.push(Piece {
                        value: rng.random_range(0.0..2.0),
                        cost: rng.random_range(0.0..3.0),
                        cell: Cell::ALL[rng.random_range(0..4)],
                    });
                }
                ps
            })
            .collect();
        MarginalDual::new(pieces, counts.map(|c| c / n as f64), rho, 0.1).unwrap()
    }

    #[test]
    fn assignment_and_simplex_transports_agree() {
        for seed in 0..20 {
            let d = random_dual(seed, 8 + 2 * seed as usize, 0.1);
            for lambda in [0.1, 0.3, 0.7, 1.5, 4.0] {
                let a = d.transport_simplex(lambda).unwrap();
                let b = d.transport_assignment(lambda).unwrap();
                assert!((a.value - b.value).abs() < 1e-10, "seed {seed} lambda {lambda}: {} vs {}", a.value, b.value);
            }
        }
    }

    #[test]
    fn large_instances_solve_exactly() {
        for seed in 0..5 {
            let d = random_dual(100 + seed, 400, 0.05 * (seed + 1) as f64);
            let sol = d.solve().unwrap();
            assert_eq!(sol.method, DualMethod::Lp);
            let (at, _, _) = d.evaluate(sol.lambda, &sol.mu);
            assert!((at - sol.value).abs() < 1e-10, "{at} vs {}", sol.value);
            let sg = d.solve_subgradient(200_000);
            assert!(sol.value <= sg.value + 1e-9 && sg.value - sol.value < 1e-4, "{} vs {}", sol.value, sg.value);
        }
    }

    #[test]
    fn rejects_empty_piece_lists() {
        assert_eq!(
            MarginalDual::new(vec![vec![]], [1.0, 0.0, 0.0, 0.0], 0.1, 0.0).unwrap_err(),
            DualError::NoPieces(0)
        );
    }
}
