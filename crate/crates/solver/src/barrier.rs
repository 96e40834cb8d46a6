//! Log-barrier Newton method for smooth convex programs.
//!
//! The problem supplies, for a barrier weight `t`, the merit function
//! `t * f(x) + phi(x)` where `f` is the smooth convex objective and `phi` is a
//! convex barrier for the feasible set. Each outer step minimises the merit
//! with damped Newton iterations and then increases `t`; the suboptimality of
//! the central point is bounded by `theta / t` with `theta` the barrier
//! parameter.
//!
//! Hessians are stored in "arrow" form: a dense leading block over the first
//! `k` variables and a diagonal block over the rest, coupled through a dense
//! `k x (n-k)` matrix, plus a few dense rank-one terms. Programs with one
//! auxiliary variable per sample and a handful of constraints that sum those
//! variables have exactly this shape. The Newton system is solved through a
//! Schur complement and the Woodbury identity in `O(k^2 (n-k) + k^3)` time.

use nalgebra::{DMatrix, DVector};

/// Symmetric matrix `[[dense, coupling], [coupling', diag(diag)]] + sum_k w_k u_k u_k'`.
#[derive(Debug, Clone)]
pub struct ArrowMatrix {
    pub dense: DMatrix<f64>,
    pub coupling: DMatrix<f64>,
    pub diag: DVector<f64>,
    /// Positive-weight rank-one terms that do not fit the arrow pattern.
    pub low_rank: Vec<(f64, DVector<f64>)>,
}

/// Factorisation of the arrow part, reusable across right-hand sides.
struct ArrowFactor {
    k: usize,
    dinv: DVector<f64>,
    coupling: DMatrix<f64>,
    schur: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl ArrowFactor {
    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let k = self.k;
        let n = rhs.len();
        let r1 = rhs.rows(0, k);
        let r2 = rhs.rows(k, n - k);
        let r2_scaled = r2.component_mul(&self.dinv);
        let reduced = r1 - &self.coupling * &r2_scaled;
        let x1 = match &self.schur {
            Some(ch) => ch.solve(&reduced),
            None => DVector::zeros(0),
        };
        let x2 = (r2 - self.coupling.transpose() * &x1).component_mul(&self.dinv);
        let mut out = DVector::zeros(n);
        out.rows_mut(0, k).copy_from(&x1);
        out.rows_mut(k, n - k).copy_from(&x2);
        out
    }
}

impl ArrowMatrix {
    pub fn zeros(n: usize, k: usize) -> Self {
        Self {
            dense: DMatrix::zeros(k, k),
            coupling: DMatrix::zeros(k, n - k),
            diag: DVector::zeros(n - k),
            low_rank: Vec::new(),
        }
    }

    pub fn dense_dim(&self) -> usize {
        self.dense.nrows()
    }

    pub fn dim(&self) -> usize {
        self.dense_dim() + self.diag.len()
    }

    /// Adds `w * v v'` for a sparse vector `v` given as `(index, value)` pairs.
    ///
    /// Terms touching two or more diagonal-block variables are kept as dense
    /// rank-one updates, which requires `w > 0`.
    pub fn add_rank_one(&mut self, w: f64, v: &[(usize, f64)]) {
        let k = self.dense_dim();
        let tail = v.iter().filter(|(i, _)| *i >= k).count();
        if tail >= 2 {
            assert!(w > 0.0, "dense rank-one terms need a positive weight");
            let mut u = DVector::zeros(self.dim());
            for &(i, vi) in v {
                u[i] += vi;
            }
            self.low_rank.push((w, u));
            return;
        }
        for &(i, vi) in v {
            for &(j, vj) in v {
                let val = w * vi * vj;
                match (i < k, j < k) {
                    (true, true) => self.dense[(i, j)] += val,
                    (true, false) => self.coupling[(i, j - k)] += val,
                    (false, true) => {}
                    (false, false) => self.diag[i - k] += val,
                }
            }
        }
    }

    fn factor(&self, reg: f64) -> Option<ArrowFactor> {
        let k = self.dense_dim();
        let dinv = self.diag.map(|d| 1.0 / (d + reg));
        if dinv.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return None;
        }
        // S = A - B D^{-1} B'
        let mut scaled = self.coupling.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= dinv[j];
        }
        let mut schur = &self.dense - &scaled * self.coupling.transpose();
        for i in 0..k {
            schur[(i, i)] += reg;
        }
        let schur = if k == 0 { None } else { Some(schur.cholesky()?) };
        Some(ArrowFactor {
            k,
            dinv,
            coupling: self.coupling.clone(),
            schur,
        })
    }

    /// Solves `(self + reg * I) x = rhs`; `None` when the arrow part is not
    /// positive definite.
    fn solve(&self, rhs: &DVector<f64>, reg: f64) -> Option<DVector<f64>> {
        let f = self.factor(reg)?;
        let z = f.solve(rhs);
        let out = if self.low_rank.is_empty() {
            z
        } else {
            // Woodbury: (A + U W U')^{-1} r = z - Y (W^{-1} + U'Y)^{-1} U'z with Y = A^{-1} U.
            let m = self.low_rank.len();
            let ys: Vec<DVector<f64>> = self.low_rank.iter().map(|(_, u)| f.solve(u)).collect();
            let cap = DMatrix::from_fn(m, m, |i, j| {
                let base = self.low_rank[i].1.dot(&ys[j]);
                if i == j {
                    base + 1.0 / self.low_rank[i].0
                } else {
                    base
                }
            });
            let utz = DVector::from_fn(m, |i, _| self.low_rank[i].1.dot(&z));
            let q = cap.lu().solve(&utz)?;
            let mut out = z;
            for (j, y) in ys.iter().enumerate() {
                out.axpy(-q[j], y, 1.0);
            }
            out
        };
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

/// Merit value, gradient and (optionally) Hessian at a point.
#[derive(Debug, Clone)]
pub struct BarrierEval {
    /// `f(x)`, the objective being minimised.
    pub objective: f64,
    /// `t * f(x) + phi(x)`.
    pub merit: f64,
    pub grad: DVector<f64>,
    pub hess: Option<ArrowMatrix>,
}

/// Incremental builder for [`BarrierEval`].
///
/// Smooth terms are described by a value, a sparse gradient and a list of
/// rank-one curvature terms `w v v'` whose sum is the Hessian.
pub struct EvalBuilder {
    t: f64,
    objective: f64,
    merit: f64,
    grad: DVector<f64>,
    hess: Option<ArrowMatrix>,
}

impl EvalBuilder {
    pub fn new(n: usize, k: usize, t: f64, with_hessian: bool) -> Self {
        Self {
            t,
            objective: 0.0,
            merit: 0.0,
            grad: DVector::zeros(n),
            hess: with_hessian.then(|| ArrowMatrix::zeros(n, k)),
        }
    }

    /// Adds a term to the objective `f`.
    pub fn objective(&mut self, value: f64, grad: &[(usize, f64)], curvature: &[(f64, &[(usize, f64)])]) {
        self.objective += value;
        self.merit += self.t * value;
        for &(i, g) in grad {
            self.grad[i] += self.t * g;
        }
        if let Some(h) = self.hess.as_mut() {
            for &(w, v) in curvature {
                h.add_rank_one(self.t * w, v);
            }
        }
    }

    /// Adds `-log s(x)` for a constraint `s(x) > 0`.
    ///
    /// `neg_curvature` describes the Hessian of `-s` as rank-one terms. Returns
    /// `false` (and leaves the builder unusable) when `s <= 0`.
    pub fn log_barrier(
        &mut self,
        s: f64,
        grad_s: &[(usize, f64)],
        neg_curvature: &[(f64, &[(usize, f64)])],
    ) -> bool {
        if !(s > 0.0) || !s.is_finite() {
            self.merit = f64::INFINITY;
            return false;
        }
        self.merit -= s.ln();
        let inv = 1.0 / s;
        for &(i, g) in grad_s {
            self.grad[i] -= inv * g;
        }
        if let Some(h) = self.hess.as_mut() {
            h.add_rank_one(inv * inv, grad_s);
            for &(w, v) in neg_curvature {
                h.add_rank_one(inv * w, v);
            }
        }
        true
    }

    pub fn finish(self) -> Option<BarrierEval> {
        if !self.merit.is_finite() || self.grad.iter().any(|g| !g.is_finite()) {
            return None;
        }
        Some(BarrierEval {
            objective: self.objective,
            merit: self.merit,
            grad: self.grad,
            hess: self.hess,
        })
    }
}

pub trait BarrierProblem {
    fn dim(&self) -> usize;

    /// Size of the dense Hessian block; the remaining variables must only
    /// couple to the dense block, never to each other.
    fn dense_dim(&self) -> usize {
        self.dim()
    }

    /// Barrier parameter `theta`: `theta / t` bounds the suboptimality of a
    /// central point. Zero for unconstrained problems.
    fn barrier_parameter(&self) -> f64;

    /// A point in the interior of the feasible set.
    fn initial_point(&self) -> Vec<f64>;

    /// Evaluates the merit at `x` for weight `t`; `None` outside the domain.
    fn eval(&self, x: &[f64], t: f64, with_hessian: bool) -> Option<BarrierEval>;
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierOptions {
    /// Absolute tolerance on the objective, scaled by `1 + |f|`.
    pub tol: f64,
    pub initial_t: f64,
    pub t_growth: f64,
    pub max_newton_steps: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            initial_t: 1.0,
            t_growth: 8.0,
            max_newton_steps: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierReport {
    pub newton_steps: usize,
    pub outer_steps: usize,
    pub converged: bool,
    /// Bound `theta / t` on the suboptimality at exit.
    pub gap_bound: f64,
}

/// Damped Newton on the merit for fixed `t`. Returns the number of steps and
/// whether the Newton decrement fell below the threshold.
fn centre<P: BarrierProblem + ?Sized>(
    prob: &P,
    x: &mut DVector<f64>,
    t: f64,
    budget: usize,
) -> (usize, bool) {
    let mut steps = 0;
    while steps < budget {
        let Some(ev) = prob.eval(x.as_slice(), t, true) else {
            return (steps, false);
        };
        let hess = ev.hess.as_ref().expect("hessian requested");
        let scale = 1.0 + hess.dense.amax().max(hess.diag.amax());
        let mut reg = 0.0;
        let dx = loop {
            match hess.solve(&(-&ev.grad), reg) {
                Some(d) => break Some(d),
                None if reg < 1e-2 * scale => {
                    reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
                }
                None => break None,
            }
        };
        let Some(dx) = dx else {
            return (steps, false);
        };
        let decrement = -ev.grad.dot(&dx);
        steps += 1;
        if decrement <= 1e-14 * (1.0 + ev.merit.abs()) || decrement < 1e-20 {
            return (steps, true);
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-16 {
            let trial = &*x + alpha * &dx;
            if let Some(tr) = prob.eval(trial.as_slice(), t, false) {
                // The Armijo margin can round away; insist on a real decrease.
                if tr.merit <= ev.merit - 0.25 * alpha * decrement && tr.merit < ev.merit {
                    *x = trial;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            // No further progress is representable in floating point.
            return (steps, decrement < 1e-9 * (1.0 + ev.merit.abs()));
        }
        if decrement < 1e-10 && alpha == 1.0 {
            return (steps, true);
        }
    }
    (steps, false)
}

/// Minimises the problem and returns `(x, f(x), report)`.
pub fn minimize_barrier<P: BarrierProblem + ?Sized>(
    prob: &P,
    opts: &BarrierOptions,
) -> (Vec<f64>, f64, BarrierReport) {
    let theta = prob.barrier_parameter();
    let x0 = prob.initial_point();
    assert_eq!(x0.len(), prob.dim(), "initial point has wrong dimension");
    let mut x = DVector::from_vec(x0);
    assert!(
        prob.eval(x.as_slice(), opts.initial_t, false).is_some(),
        "initial point is not strictly feasible"
    );
    let mut t = opts.initial_t;
    let mut report = BarrierReport {
        newton_steps: 0,
        outer_steps: 0,
        converged: false,
        gap_bound: f64::INFINITY,
    };
    loop {
        let budget = opts.max_newton_steps.saturating_sub(report.newton_steps);
        let (steps, centred) = centre(prob, &mut x, t, budget);
        report.newton_steps += steps;
        report.outer_steps += 1;
        let f = prob
            .eval(x.as_slice(), t, false)
            .map(|e| e.objective)
            .unwrap_or(f64::NAN);
        report.gap_bound = theta / t;
        let target = opts.tol * (1.0 + f.abs());
        if theta == 0.0 || report.gap_bound <= target {
            report.converged = centred || report.gap_bound <= target;
            return (x.as_slice().to_vec(), f, report);
        }
        if report.newton_steps >= opts.max_newton_steps {
            return (x.as_slice().to_vec(), f, report);
        }
        t *= opts.t_growth;
    }
}
