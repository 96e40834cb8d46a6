//! Projected subgradient method.
//!
//! Two step rules are provided. With a known lower bound on the optimal value
//! the classical Polyak step is used. Otherwise a variable target level is
//! maintained: the step aims at `f_best - delta`, `delta` grows when the
//! target is reached and is halved after a run of iterations without any
//! improvement, restarting from the best point. This needs no problem-specific tuning.

/// Consecutive non-improving iterations before the target gap is halved.
const TARGET_PATIENCE: usize = 12;

/// A convex minimisation problem over a closed convex set.
pub trait ConvexProblem {
    fn dim(&self) -> usize;

    /// Returns `f(x)` and writes a subgradient into `grad`.
    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Euclidean projection onto the feasible set; identity when unconstrained.
    fn project(&self, _x: &mut [f64]) {}

    fn initial_point(&self) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Polyak step towards a known lower bound of the optimal value.
    Polyak { lower_bound: f64 },
    /// Variable target level with an initial gap estimate (`None` picks one from `f(x0)`).
    TargetLevel { initial_gap: Option<f64> },
    /// `scale / sqrt(k+1)` normalised steps.
    Diminishing { scale: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct SubgradientOptions {
    /// Relative tolerance on the objective value.
    pub tol: f64,
    pub max_iters: usize,
    pub step: StepRule,
}

impl Default for SubgradientOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 200_000,
            step: StepRule::TargetLevel { initial_gap: None },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub converged: bool,
    pub final_step: f64,
    /// Estimated optimality gap of the returned point (lower-bound gap for
    /// Polyak steps, current target offset otherwise).
    pub gap_estimate: f64,
}

/// Minimises `prob` and returns `(best point, best value, report)`.
///
/// The returned point is always the best feasible iterate seen. When the
/// iteration budget runs out it is returned with `converged == false`.
pub fn minimize_convex<P: ConvexProblem + ?Sized>(
    prob: &P,
    opts: &SubgradientOptions,
) -> (Vec<f64>, f64, ConvergenceReport) {
    let n = prob.dim();
    let mut x = prob.initial_point();
    assert_eq!(x.len(), n, "initial point has wrong dimension");
    prob.project(&mut x);
    let mut g = vec![0.0; n];
    let mut f = prob.evaluate(&x, &mut g);
    let mut best_x = x.clone();
    let mut best_f = f;

    let mut delta = match opts.step {
        StepRule::TargetLevel { initial_gap: Some(d) } => d,
        _ => 0.1 * (1.0 + f.abs()),
    };
    let mut misses = 0usize;
    let mut last_step = 0.0;

    for k in 0..opts.max_iters {
        let gap_estimate = match opts.step {
            StepRule::Polyak { lower_bound } => best_f - lower_bound,
            StepRule::TargetLevel { .. } => delta,
            StepRule::Diminishing { .. } => f64::INFINITY,
        };
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        if gnorm2 == 0.0 {
            // A zero subgradient certifies optimality of the current point.
            return (
                x,
                f,
                ConvergenceReport {
                    iterations: k,
                    converged: true,
                    final_step: 0.0,
                    gap_estimate: 0.0,
                },
            );
        }
        if gap_estimate <= opts.tol * (1.0 + best_f.abs()) {
            return (
                best_x,
                best_f,
                ConvergenceReport {
                    iterations: k,
                    converged: true,
                    final_step: last_step,
                    gap_estimate: gap_estimate.max(0.0),
                },
            );
        }

        let alpha = match opts.step {
            StepRule::Polyak { lower_bound } => (f - lower_bound).max(0.0) / gnorm2,
            StepRule::TargetLevel { .. } => (f - best_f + delta) / gnorm2,
            StepRule::Diminishing { scale } => scale / ((k + 1) as f64).sqrt() / gnorm2.sqrt(),
        };
        let prev = x.clone();
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= alpha * gi;
        }
        prob.project(&mut x);
        let moved = prev
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        last_step = moved;
        f = prob.evaluate(&x, &mut g);

        if let StepRule::TargetLevel { .. } = opts.step {
            if f <= best_f - delta {
                delta *= 1.5;
                misses = 0;
            } else if f < best_f {
                misses = 0;
            } else {
                misses += 1;
                if misses >= TARGET_PATIENCE {
                    delta *= 0.5;
                    misses = 0;
                    if f > best_f {
                        x.clone_from(&best_x);
                        f = prob.evaluate(&x, &mut g);
                    }
                }
            }
        }
        if f < best_f {
            best_f = f;
            best_x.clone_from(&x);
        }
    }
    let gap_estimate = match opts.step {
        StepRule::Polyak { lower_bound } => best_f - lower_bound,
        StepRule::TargetLevel { .. } => delta,
        StepRule::Diminishing { .. } => f64::INFINITY,
    };
    (
        best_x,
        best_f,
        ConvergenceReport {
            iterations: opts.max_iters,
            converged: false,
            final_step: last_step,
            gap_estimate,
        },
    )
}
