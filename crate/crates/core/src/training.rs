//! Plain, fair and distributionally robust fair logistic regression.
//!
//! For a branch `(a, a')` the fair objective is the empirical mean of
//! `loss + eta r_a log h 1{(a,1)} - eta r_a' log h 1{(a',1)}`. Since
//! `log h = -softplus(-z)`, every sample contributes `w softplus(s z)` where
//! `s` is `+1` for negatives and `-1` for positives and the weight `w` only
//! depends on the sample's cell. The weights are nonnegative exactly when
//! `eta <= min(p_11, p_01)`, which is what makes the programs convex.
//!
//! The fair fit minimises the larger of the two branch objectives. The robust
//! fit minimises the larger of the two worst-case branch values over the
//! marginal-preserving ball, written as one program in
//! `(beta, t, lambda, mu, nu)` with separate `lambda, mu, nu` per branch and a
//! shared epigraph variable `t`.
//!
//! All programs are smooth once the epigraph variable is introduced and are
//! solved with the log-barrier Newton method of the solver crate. Weights are
//! confined to `||beta||_2 < 1e3`; fits that end up against that cap (for
//! example on separable data) are reported as not converged.

use fairdro_solver::{minimize_barrier, BarrierEval, BarrierOptions, BarrierProblem, BarrierReport, EvalBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Cell, Dataset, MarginalStats};
use crate::dual::{DualError, MarginalDual, Piece};
use crate::metric::{AmbiguityConfig, GroundMetric, MetricError, Norm};
use crate::model::{dot, sigmoid, softplus, ModelError, ModelWeights};

/// Euclidean bound on the weight vector.
pub const WEIGHT_CAP: f64 = 1e3;

/// The two orientations of the absolute value in the fairness penalty.
pub const BRANCHES: [(u8, u8); 2] = [(1, 0), (0, 1)];

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("eta = {eta} exceeds the admissible bound min(p_11, p_01) = {bound}")]
    EtaTooLarge { eta: f64, bound: f64 },
    #[error("eta = {0} must be a nonnegative finite number")]
    InvalidEta(f64),
    #[error("group a={0} has no positive samples, so the fairness penalty is undefined")]
    MissingPositives(u8),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dual(#[from] DualError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lr,
    Flr,
    Drflr,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lr => "lr",
            Method::Flr => "flr",
            Method::Drflr => "drflr",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s.to_ascii_lowercase().as_str() {
            "lr" => Some(Method::Lr),
            "flr" => Some(Method::Flr),
            "drflr" | "dr-flr" => Some(Method::Drflr),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the unfairness penalty.
    pub eta: f64,
    /// Radius and ground metric; only used by the robust fit.
    pub ambiguity: AmbiguityConfig,
    /// Relative objective tolerance of the barrier method.
    pub tol: f64,
    /// Cap on Newton steps.
    pub max_iters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.0,
            ambiguity: AmbiguityConfig::default(),
            tol: 1e-9,
            max_iters: 3_000,
        }
    }
}

impl TrainConfig {
    pub fn new(eta: f64, ambiguity: AmbiguityConfig) -> Self {
        Self {
            eta,
            ambiguity,
            ..Default::default()
        }
    }

    fn barrier_options(&self) -> BarrierOptions {
        BarrierOptions {
            tol: self.tol,
            max_newton_steps: self.max_iters,
            ..Default::default()
        }
    }
}

/// Optimal multipliers of one branch of the robust program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchDuals {
    pub lambda: f64,
    /// `mu[a][y]`; pinned and empty cells hold zero.
    pub mu: [[f64; 2]; 2],
    pub nu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualVariables {
    /// Branch `(a, a') = (1, 0)`; its `lambda` is at least `(1 + eta r_0) ||beta||_*`.
    pub branch_10: BranchDuals,
    /// Branch `(a, a') = (0, 1)`; its `lambda` is at least `(1 + eta r_1) ||beta||_*`.
    pub branch_01: BranchDuals,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Bound on the suboptimality of the returned point.
    pub final_tolerance: f64,
    /// The weights reached the norm cap.
    pub capped: bool,
}

impl Diagnostics {
    fn from_report(report: &BarrierReport, beta: &[f64]) -> Self {
        let capped = Norm::L2.eval(beta) >= 0.99 * WEIGHT_CAP;
        Self {
            iterations: report.newton_steps,
            converged: report.converged && !capped,
            final_tolerance: report.gap_bound,
            capped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub weights: ModelWeights,
    pub objective: f64,
    pub duals: Option<DualVariables>,
    pub diagnostics: Diagnostics,
}

/// Checks `eta` against the training marginal; returns `(r_0, r_1)`.
fn check_penalty(stats: &MarginalStats, eta: f64) -> Result<[f64; 2], TrainError> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(TrainError::InvalidEta(eta));
    }
    let r0 = stats.r(0).ok_or(TrainError::MissingPositives(0))?;
    let r1 = stats.r(1).ok_or(TrainError::MissingPositives(1))?;
    let bound = stats.max_eta();
    if eta > bound {
        return Err(TrainError::EtaTooLarge { eta, bound });
    }
    Ok([r0, r1])
}

/// Per-cell weights of the branch `(a, a')`, indexed like [`Cell::ALL`].
fn branch_weights(r: [f64; 2], eta: f64, (a, a2): (u8, u8)) -> [f64; 4] {
    let mut w = [1.0; 4];
    // Rounding can push 1 - eta r_a a hair below zero at the bound.
    w[Cell::new(a, 1).index()] = (1.0 - eta * r[a as usize]).max(0.0);
    w[Cell::new(a2, 1).index()] = 1.0 + eta * r[a2 as usize];
    w
}

/// Largest branch weight, `1 + eta r_a'`.
fn branch_scale(r: [f64; 2], eta: f64, (_, a2): (u8, u8)) -> f64 {
    1.0 + eta * r[a2 as usize]
}

#[inline]
fn cell_sign(c: usize) -> f64 {
    if c % 2 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// `w softplus(s z)` and its first two derivatives in `z`.
#[inline]
fn smooth_piece(w: f64, s: f64, z: f64) -> (f64, f64, f64) {
    let sz = s * z;
    (w * softplus(sz), w * s * sigmoid(sz), w * sigmoid(sz) * sigmoid(-sz))
}

/// Bound on `||beta||_*` implied by `||beta||_2 <= WEIGHT_CAP`.
fn dual_norm_cap(norm: Norm, p: usize) -> f64 {
    match norm.dual() {
        Norm::L1 => WEIGHT_CAP * (p as f64).sqrt(),
        _ => WEIGHT_CAP,
    }
}

/// Samples laid out for repeated margin evaluations.
struct Samples {
    n: usize,
    p: usize,
    cells: Vec<usize>,
    /// Feature rows as `(index, value)` pairs; `beta` always occupies `0..p`.
    rows: Vec<Vec<(usize, f64)>>,
}

impl Samples {
    fn new(data: &Dataset) -> Self {
        Self {
            n: data.len(),
            p: data.dim(),
            cells: (0..data.len()).map(|i| data.cell(i).index()).collect(),
            rows: data.rows().map(|x| x.iter().copied().enumerate().collect()).collect(),
        }
    }

    fn margins(&self, beta: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(j, v)| beta[j] * v).sum())
            .collect()
    }

    /// Mean of `w[cell] softplus(s z)` with gradient and curvature weights.
    fn smooth_mean<'a>(
        &'a self,
        z: &[f64],
        w: &[f64; 4],
        grad: &mut [f64],
        curvature: &mut Vec<(f64, &'a [(usize, f64)])>,
    ) -> f64 {
        let inv = 1.0 / self.n as f64;
        let mut value = 0.0;
        grad.iter_mut().for_each(|g| *g = 0.0);
        curvature.clear();
        for i in 0..self.n {
            let c = self.cells[i];
            let (v, d1, d2) = smooth_piece(w[c], cell_sign(c), z[i]);
            value += v;
            for &(j, x) in &self.rows[i] {
                grad[j] += inv * d1 * x;
            }
            if d2 > 0.0 {
                curvature.push((inv * d2, &self.rows[i]));
            }
        }
        value * inv
    }
}

fn unit_vectors(p: usize, offset: usize) -> Vec<[(usize, f64); 1]> {
    (0..p).map(|j| [(offset + j, 1.0)]).collect()
}

/// `-log(WEIGHT_CAP^2 - ||beta||^2)`.
fn add_weight_cap(b: &mut EvalBuilder, beta: &[f64], units: &[[(usize, f64); 1]]) -> bool {
    let sq: f64 = beta.iter().map(|v| v * v).sum();
    let grad: Vec<(usize, f64)> = beta.iter().enumerate().map(|(j, &v)| (j, -2.0 * v)).collect();
    let curv: Vec<(f64, &[(usize, f64)])> = units.iter().map(|u| (2.0, &u[..])).collect();
    b.log_barrier(WEIGHT_CAP * WEIGHT_CAP - sq, &grad, &curv)
}

/// Barrier for `x[bound] >= c ||beta||_*`, with `||.||_*` dual to the feature norm.
#[derive(Debug, Clone, Copy)]
struct NormCone {
    norm: Norm,
    c: f64,
    bound: usize,
    /// First of `p` auxiliary variables, used when the dual norm is l1.
    aux: usize,
}

impl NormCone {
    fn aux_len(norm: Norm, p: usize) -> usize {
        if norm.dual() == Norm::L1 {
            p
        } else {
            0
        }
    }

    fn theta(&self, p: usize) -> f64 {
        match self.norm.dual() {
            Norm::L2 => 2.0,
            Norm::Linf => 2.0 * p as f64,
            Norm::L1 => 2.0 * p as f64 + 1.0,
        }
    }

    /// Raises the bound variable (and sets auxiliaries) so `x` is strictly inside.
    fn initialise(&self, x: &mut [f64], p: usize) {
        let need = if self.norm.dual() == Norm::L1 {
            for j in 0..p {
                x[self.aux + j] = x[j].abs() + 1.0;
            }
            x[self.aux..self.aux + p].iter().sum::<f64>()
        } else {
            self.norm.dual_eval(&x[..p])
        };
        x[self.bound] = x[self.bound].max(self.c * need + 1.0);
    }

    fn add(&self, b: &mut EvalBuilder, x: &[f64], p: usize, units: &[[(usize, f64); 1]]) -> bool {
        let lam = x[self.bound];
        let c = self.c;
        match self.norm.dual() {
            Norm::L2 => {
                if !(lam > 0.0) {
                    return b.log_barrier(0.0, &[], &[]);
                }
                let sq: f64 = x[..p].iter().map(|v| v * v).sum();
                let mut grad = vec![(self.bound, 2.0 * lam)];
                grad.extend((0..p).map(|j| (j, -2.0 * c * c * x[j])));
                let lam_unit = [(self.bound, 1.0)];
                let mut curv: Vec<(f64, &[(usize, f64)])> = vec![(-2.0, &lam_unit[..])];
                curv.extend(units.iter().map(|u| (2.0 * c * c, &u[..])));
                b.log_barrier(lam * lam - c * c * sq, &grad, &curv)
            }
            Norm::Linf => (0..p).all(|j| {
                b.log_barrier(lam - c * x[j], &[(self.bound, 1.0), (j, -c)], &[])
                    && b.log_barrier(lam + c * x[j], &[(self.bound, 1.0), (j, c)], &[])
            }),
            Norm::L1 => {
                let u = self.aux;
                for j in 0..p {
                    if !b.log_barrier(x[u + j] - x[j], &[(u + j, 1.0), (j, -1.0)], &[])
                        || !b.log_barrier(x[u + j] + x[j], &[(u + j, 1.0), (j, 1.0)], &[])
                    {
                        return false;
                    }
                }
                let total: f64 = x[u..u + p].iter().sum();
                let mut grad = vec![(self.bound, 1.0)];
                grad.extend((0..p).map(|j| (u + j, -c)));
                b.log_barrier(lam - c * total, &grad, &[])
            }
        }
    }
}

/// `min mean log-loss`.
struct LogisticProgram {
    samples: Samples,
}

impl BarrierProblem for LogisticProgram {
    fn dim(&self) -> usize {
        self.samples.p
    }

    fn barrier_parameter(&self) -> f64 {
        1.0
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.samples.p]
    }

    fn eval(&self, x: &[f64], t: f64, with_hessian: bool) -> Option<BarrierEval> {
        let s = &self.samples;
        let mut b = EvalBuilder::new(s.p, s.p, t, with_hessian);
        let z = s.margins(x);
        let mut grad = vec![0.0; s.p];
        let mut curv = Vec::new();
        let value = s.smooth_mean(&z, &[1.0; 4], &mut grad, &mut curv);
        let grad: Vec<(usize, f64)> = grad.into_iter().enumerate().collect();
        b.objective(value, &grad, &curv);
        add_weight_cap(&mut b, x, &unit_vectors(s.p, 0));
        b.finish()
    }
}

/// `min t  s.t.  t >= T_b(beta) + rho c_b s,  s >= ||beta||_*`.
///
/// With `rho = 0` the `s` block is omitted and this is the fair program;
/// with both trust weights infinite it is the reduced robust program.
struct EpigraphProgram {
    samples: Samples,
    weights: [[f64; 4]; 2],
    scales: [f64; 2],
    rho: f64,
    cone: Option<NormCone>,
    s_cap: f64,
    t_cap: f64,
}

impl EpigraphProgram {
    fn new(samples: Samples, r: [f64; 2], eta: f64, rho: f64, norm: Norm) -> Self {
        let p = samples.p;
        let cone = (rho > 0.0).then_some(NormCone {
            norm,
            c: 1.0,
            bound: p + 1,
            aux: p + 2,
        });
        let mut prog = Self {
            weights: BRANCHES.map(|br| branch_weights(r, eta, br)),
            scales: BRANCHES.map(|br| branch_scale(r, eta, br)),
            samples,
            rho,
            cone,
            s_cap: dual_norm_cap(norm, p) + 1.0,
            t_cap: f64::INFINITY,
        };
        let x0 = prog.start();
        prog.t_cap = x0[p] + 10.0 * (1.0 + x0[p].abs());
        prog
    }

    fn start(&self) -> Vec<f64> {
        let p = self.samples.p;
        let mut x = vec![0.0; self.dim()];
        if let Some(cone) = &self.cone {
            cone.initialise(&mut x, p);
        }
        let z = self.samples.margins(&x[..p]);
        let mut g = vec![0.0; p];
        let mut curv = Vec::new();
        let t = (0..2)
            .map(|b| self.samples.smooth_mean(&z, &self.weights[b], &mut g, &mut curv) + self.rho * self.scales[b] * self.s(&x))
            .fold(f64::NEG_INFINITY, f64::max);
        x[p] = t + 1.0;
        x
    }

    fn s(&self, x: &[f64]) -> f64 {
        if self.cone.is_some() {
            x[self.samples.p + 1]
        } else {
            0.0
        }
    }
}

impl BarrierProblem for EpigraphProgram {
    fn dim(&self) -> usize {
        let p = self.samples.p;
        match &self.cone {
            Some(c) => p + 2 + NormCone::aux_len(c.norm, p),
            None => p + 1,
        }
    }

    fn barrier_parameter(&self) -> f64 {
        let p = self.samples.p;
        4.0 + self.cone.map_or(0.0, |c| c.theta(p) + 1.0)
    }

    fn initial_point(&self) -> Vec<f64> {
        self.start()
    }

    fn eval(&self, x: &[f64], t: f64, with_hessian: bool) -> Option<BarrierEval> {
        let s = &self.samples;
        let p = s.p;
        let n = self.dim();
        let ti = p;
        let mut b = EvalBuilder::new(n, n, t, with_hessian);
        b.objective(x[ti], &[(ti, 1.0)], &[]);
        let z = s.margins(&x[..p]);
        let mut g = vec![0.0; p];
        let mut curv = Vec::new();
        let units = unit_vectors(p, 0);
        for br in 0..2 {
            let value = s.smooth_mean(&z, &self.weights[br], &mut g, &mut curv);
            let mut grad = vec![(ti, 1.0)];
            grad.extend(g.iter().enumerate().map(|(j, &v)| (j, -v)));
            let mut slack = x[ti] - value;
            if self.cone.is_some() {
                slack -= self.rho * self.scales[br] * x[p + 1];
                grad.push((p + 1, -self.rho * self.scales[br]));
            }
            if !b.log_barrier(slack, &grad, &curv) {
                return None;
            }
        }
        if let Some(cone) = &self.cone {
            if !cone.add(&mut b, x, p, &units) || !b.log_barrier(self.s_cap - x[p + 1], &[(p + 1, -1.0)], &[]) {
                return None;
            }
        }
        if !b.log_barrier(self.t_cap - x[ti], &[(ti, -1.0)], &[]) || !add_weight_cap(&mut b, &x[..p], &units) {
            return None;
        }
        b.finish()
    }
}

/// Cells that can receive mass, the transport cost between cells, and the
/// cells whose `mu` is a free variable (all but one per connected group).
#[derive(Debug, Clone)]
struct CellGraph {
    available: [bool; 4],
    cost: [[f64; 4]; 4],
    free: Vec<usize>,
}

impl CellGraph {
    fn new(stats: &MarginalStats, metric: &GroundMetric) -> Self {
        let available = Cell::ALL.map(|c| stats.count(c) > 0);
        let mut cost = [[0.0; 4]; 4];
        for (i, &from) in Cell::ALL.iter().enumerate() {
            for (j, &to) in Cell::ALL.iter().enumerate() {
                cost[i][j] = metric.cell_cost(from, to);
            }
        }
        // Pin the lowest available cell of each connected group.
        let mut free = Vec::new();
        for c in 0..4 {
            if !available[c] {
                continue;
            }
            let has_lower = (0..c).any(|d| available[d] && cost[d][c].is_finite());
            if has_lower {
                free.push(c);
            }
        }
        Self { available, cost, free }
    }

    /// Destination cells reachable from `from`, with their costs.
    fn destinations(&self, from: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..4)
            .filter(move |&c| self.available[c] && self.cost[from][c].is_finite())
            .map(move |c| (c, self.cost[from][c]))
    }

    fn min_positive_cost(&self) -> f64 {
        self.cost
            .iter()
            .flatten()
            .copied()
            .filter(|c| c.is_finite() && *c > 0.0)
            .fold(f64::INFINITY, f64::min)
    }
}

/// The joint robust program for finite trust weights.
///
/// Dense variables: `beta (p)`, `t`, then per branch `lambda`, free `mu`,
/// and cone auxiliaries. Diagonal variables: `nu` for each branch and sample.
struct RobustProgram {
    samples: Samples,
    graph: CellGraph,
    weights: [[f64; 4]; 2],
    cones: [NormCone; 2],
    p_hat: [f64; 4],
    rho: f64,
    lambda_cap: [f64; 2],
    t_cap: f64,
    block: usize,
}

impl RobustProgram {
    fn new(samples: Samples, stats: &MarginalStats, r: [f64; 2], eta: f64, amb: &AmbiguityConfig) -> Self {
        let p = samples.p;
        let graph = CellGraph::new(stats, &amb.metric);
        let norm = amb.metric.norm;
        let block = 1 + graph.free.len() + NormCone::aux_len(norm, p);
        let cones = [0, 1].map(|b| {
            let base = p + 1 + b * block;
            NormCone {
                norm,
                c: branch_scale(r, eta, BRANCHES[b]),
                bound: base,
                aux: base + 1 + graph.free.len(),
            }
        });
        let x_max = samples
            .rows
            .iter()
            .map(|row| row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let v_max = (1.0 + eta * r[0].max(r[1])) * (WEIGHT_CAP * x_max + std::f64::consts::LN_2);
        let kappa_min = graph.min_positive_cost();
        let move_bound = if kappa_min.is_finite() { 4.0 * v_max / kappa_min } else { 0.0 };
        let lambda_cap = cones.map(|c| 10.0 * (c.c * dual_norm_cap(norm, p) + move_bound) + 1.0);
        let mut prog = Self {
            weights: BRANCHES.map(|br| branch_weights(r, eta, br)),
            p_hat: stats.p_hat_cells(),
            rho: amb.rho,
            samples,
            graph,
            cones,
            lambda_cap,
            t_cap: f64::INFINITY,
            block,
        };
        let x0 = prog.start();
        prog.t_cap = x0[p] + 10.0 * (1.0 + x0[p].abs());
        for b in 0..2 {
            prog.lambda_cap[b] = prog.lambda_cap[b].max(2.0 * x0[prog.cones[b].bound]);
        }
        prog
    }

    fn dense(&self) -> usize {
        self.samples.p + 1 + 2 * self.block
    }

    fn nu_index(&self, b: usize, i: usize) -> usize {
        self.dense() + b * self.samples.n + i
    }

    fn mu_index(&self, b: usize, cell: usize) -> Option<usize> {
        self.graph
            .free
            .iter()
            .position(|&c| c == cell)
            .map(|k| self.cones[b].bound + 1 + k)
    }

    fn mu(&self, x: &[f64], b: usize) -> [f64; 4] {
        let mut mu = [0.0; 4];
        for c in 0..4 {
            if let Some(k) = self.mu_index(b, c) {
                mu[c] = x[k];
            }
        }
        mu
    }

    /// `max_c (v_b(c, z_i) - cost lambda - mu_c)` for every sample.
    fn best_nu(&self, z: &[f64], b: usize, lambda: f64, mu: &[f64; 4]) -> Vec<f64> {
        (0..self.samples.n)
            .map(|i| {
                let from = self.samples.cells[i];
                self.graph
                    .destinations(from)
                    .map(|(c, cost)| {
                        self.weights[b][c] * softplus(cell_sign(c) * z[i]) - cost * lambda - mu[c]
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    fn start(&self) -> Vec<f64> {
        let p = self.samples.p;
        let n = self.samples.n;
        let mut x = vec![0.0; self.dim()];
        for cone in &self.cones {
            cone.initialise(&mut x, p);
        }
        let z = vec![0.0; n];
        let mut t = f64::NEG_INFINITY;
        for b in 0..2 {
            let lambda = x[self.cones[b].bound];
            let nu = self.best_nu(&z, b, lambda, &[0.0; 4]);
            let mut total = self.rho * lambda;
            for (i, v) in nu.iter().enumerate() {
                x[self.nu_index(b, i)] = v + 1.0;
                total += (v + 1.0) / n as f64;
            }
            t = t.max(total);
        }
        x[p] = t + 1.0;
        x
    }
}

impl BarrierProblem for RobustProgram {
    fn dim(&self) -> usize {
        self.dense() + 2 * self.samples.n
    }

    fn dense_dim(&self) -> usize {
        self.dense()
    }

    fn barrier_parameter(&self) -> f64 {
        let p = self.samples.p;
        let pieces: usize = (0..self.samples.n)
            .map(|i| self.graph.destinations(self.samples.cells[i]).count())
            .sum();
        2.0 * pieces as f64 + 2.0 + self.cones.iter().map(|c| c.theta(p)).sum::<f64>() + 2.0 + 2.0
    }

    fn initial_point(&self) -> Vec<f64> {
        self.start()
    }

    fn eval(&self, x: &[f64], t: f64, with_hessian: bool) -> Option<BarrierEval> {
        let s = &self.samples;
        let (p, n) = (s.p, s.n);
        let ti = p;
        let mut b = EvalBuilder::new(self.dim(), self.dense(), t, with_hessian);
        b.objective(x[ti], &[(ti, 1.0)], &[]);
        let z = s.margins(&x[..p]);
        let units = unit_vectors(p, 0);
        let inv = 1.0 / n as f64;
        let mut grad = Vec::with_capacity(p + 3);
        for br in 0..2 {
            let li = self.cones[br].bound;
            let lambda = x[li];
            let mu = self.mu(x, br);
            for i in 0..n {
                let from = s.cells[i];
                let nu_i = self.nu_index(br, i);
                for (c, cost) in self.graph.destinations(from) {
                    let (v, d1, d2) = smooth_piece(self.weights[br][c], cell_sign(c), z[i]);
                    grad.clear();
                    grad.push((nu_i, 1.0));
                    if cost > 0.0 {
                        grad.push((li, cost));
                    }
                    if let Some(k) = self.mu_index(br, c) {
                        grad.push((k, 1.0));
                    }
                    grad.extend(s.rows[i].iter().map(|&(j, xv)| (j, -d1 * xv)));
                    let slack = x[nu_i] + cost * lambda + mu[c] - v;
                    let curv: [(f64, &[(usize, f64)]); 1] = [(d2, &s.rows[i])];
                    let curv = if d2 > 0.0 { &curv[..] } else { &[] };
                    if !b.log_barrier(slack, &grad, curv) {
                        return None;
                    }
                }
            }
            // t >= rho lambda + sum_c p_c mu_c + mean nu
            let mut slack = x[ti] - self.rho * lambda;
            let mut g = vec![(ti, 1.0), (li, -self.rho)];
            for &c in &self.graph.free {
                let k = self.mu_index(br, c).expect("free cell");
                slack -= self.p_hat[c] * x[k];
                g.push((k, -self.p_hat[c]));
            }
            for i in 0..n {
                let k = self.nu_index(br, i);
                slack -= inv * x[k];
                g.push((k, -inv));
            }
            if !b.log_barrier(slack, &g, &[])
                || !self.cones[br].add(&mut b, x, p, &units)
                || !b.log_barrier(self.lambda_cap[br] - lambda, &[(li, -1.0)], &[])
            {
                return None;
            }
        }
        if !b.log_barrier(self.t_cap - x[ti], &[(ti, -1.0)], &[]) || !add_weight_cap(&mut b, &x[..p], &units) {
            return None;
        }
        b.finish()
    }
}

/// Empirical branch objectives `[T_10, T_01]` at `beta`.
pub fn branch_objectives(data: &Dataset, beta: &ModelWeights, eta: f64) -> Result<[f64; 2], TrainError> {
    let stats = data.marginal_stats();
    let r = check_penalty(&stats, eta)?;
    let z = crate::unfairness::margins(data, beta)?;
    let n = data.len() as f64;
    Ok(BRANCHES.map(|br| {
        let w = branch_weights(r, eta, br);
        (0..data.len())
            .map(|i| {
                let c = data.cell(i).index();
                w[c] * softplus(cell_sign(c) * z[i])
            })
            .sum::<f64>()
            / n
    }))
}

/// `max(T_10, T_01)`, which equals mean log-loss plus `eta` times the
/// log-probabilistic unfairness.
pub fn fair_objective(data: &Dataset, beta: &ModelWeights, eta: f64) -> Result<f64, TrainError> {
    let [a, b] = branch_objectives(data, beta, eta)?;
    Ok(a.max(b))
}

/// Mean log-loss.
pub fn mean_log_loss(data: &Dataset, beta: &ModelWeights) -> Result<f64, ModelError> {
    let z = crate::unfairness::margins(data, beta)?;
    Ok(z.iter()
        .zip(data.labels())
        .map(|(&z, &y)| crate::model::margin_loss(z, y))
        .sum::<f64>()
        / data.len() as f64)
}

/// Unregularised logistic regression.
pub fn fit_lr(data: &Dataset, cfg: &TrainConfig) -> Result<FitResult, TrainError> {
    let prog = LogisticProgram {
        samples: Samples::new(data),
    };
    let (x, _, report) = minimize_barrier(&prog, &cfg.barrier_options());
    let weights = ModelWeights::new(x)?;
    let objective = mean_log_loss(data, &weights)?;
    Ok(FitResult {
        diagnostics: Diagnostics::from_report(&report, &weights.beta),
        weights,
        objective,
        duals: None,
    })
}

/// Fair logistic regression: minimises [`fair_objective`].
pub fn fit_flr(data: &Dataset, cfg: &TrainConfig) -> Result<FitResult, TrainError> {
    let stats = data.marginal_stats();
    let r = check_penalty(&stats, cfg.eta)?;
    let prog = EpigraphProgram::new(Samples::new(data), r, cfg.eta, 0.0, Norm::L2);
    let (x, _, report) = minimize_barrier(&prog, &cfg.barrier_options());
    let weights = ModelWeights::new(x[..data.dim()].to_vec())?;
    let objective = fair_objective(data, &weights, cfg.eta)?;
    Ok(FitResult {
        diagnostics: Diagnostics::from_report(&report, &weights.beta),
        weights,
        objective,
        duals: None,
    })
}

/// Distributionally robust fair logistic regression.
pub fn fit_drflr(data: &Dataset, cfg: &TrainConfig) -> Result<FitResult, TrainError> {
    cfg.ambiguity.validate()?;
    let stats = data.marginal_stats();
    let r = check_penalty(&stats, cfg.eta)?;
    let amb = &cfg.ambiguity;
    let p = data.dim();
    let samples = Samples::new(data);
    if amb.metric.is_infinite() {
        let prog = EpigraphProgram::new(samples, r, cfg.eta, amb.rho, amb.metric.norm);
        let (x, _, report) = minimize_barrier(&prog, &cfg.barrier_options());
        let weights = ModelWeights::new(x[..p].to_vec())?;
        let objective = worst_case_objective(data, &weights, cfg.eta, amb)?;
        let duals = reduced_duals(data, &weights, r, cfg.eta, amb, objective)?;
        return Ok(FitResult {
            diagnostics: Diagnostics::from_report(&report, &weights.beta),
            weights,
            objective,
            duals: Some(duals),
        });
    }

    let prog = RobustProgram::new(samples, &stats, r, cfg.eta, amb);
    let (x, _, report) = minimize_barrier(&prog, &cfg.barrier_options());
    let weights = ModelWeights::new(x[..p].to_vec())?;
    let z = prog.samples.margins(&weights.beta);
    let branches: Vec<BranchDuals> = (0..2)
        .map(|b| {
            let lambda = x[prog.cones[b].bound];
            let mu = prog.mu(&x, b);
            BranchDuals {
                lambda,
                mu: [[mu[0], mu[1]], [mu[2], mu[3]]],
                nu: prog.best_nu(&z, b, lambda, &mu),
            }
        })
        .collect();
    // Report the objective of the returned point with nu re-optimised exactly.
    let t = branches
        .iter()
        .map(|d| {
            let mu = [d.mu[0][0], d.mu[0][1], d.mu[1][0], d.mu[1][1]];
            amb.rho * d.lambda
                + (0..4).map(|c| prog.p_hat[c] * mu[c]).sum::<f64>()
                + d.nu.iter().sum::<f64>() / data.len() as f64
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let mut it = branches.into_iter();
    Ok(FitResult {
        diagnostics: Diagnostics::from_report(&report, &weights.beta),
        weights,
        objective: t,
        duals: Some(DualVariables {
            branch_10: it.next().expect("two branches"),
            branch_01: it.next().expect("two branches"),
            t,
        }),
    })
}

/// Multipliers of the reduced program: `lambda_b = c_b ||beta||_*` and `nu`
/// equal to each sample's own branch term.
fn reduced_duals(
    data: &Dataset,
    beta: &ModelWeights,
    r: [f64; 2],
    eta: f64,
    amb: &AmbiguityConfig,
    t: f64,
) -> Result<DualVariables, TrainError> {
    let z = crate::unfairness::margins(data, beta)?;
    let dual = amb.metric.norm.dual_eval(&beta.beta);
    let make = |b: usize| {
        let w = branch_weights(r, eta, BRANCHES[b]);
        BranchDuals {
            lambda: branch_scale(r, eta, BRANCHES[b]) * dual,
            mu: [[0.0; 2]; 2],
            nu: (0..data.len())
                .map(|i| {
                    let c = data.cell(i).index();
                    w[c] * softplus(cell_sign(c) * z[i])
                })
                .collect(),
        }
    };
    Ok(DualVariables {
        branch_10: make(0),
        branch_01: make(1),
        t,
    })
}

/// Fits with the chosen method.
pub fn fit(method: Method, data: &Dataset, cfg: &TrainConfig) -> Result<FitResult, TrainError> {
    match method {
        Method::Lr => fit_lr(data, cfg),
        Method::Flr => fit_flr(data, cfg),
        Method::Drflr => fit_drflr(data, cfg),
    }
}

/// Pieces of the inner dual for branch `b` at fixed margins.
fn branch_pieces(data: &Dataset, graph: &CellGraph, w: &[f64; 4], z: &[f64]) -> Vec<Vec<Piece>> {
    (0..data.len())
        .map(|i| {
            let from = data.cell(i).index();
            graph
                .destinations(from)
                .map(|(c, cost)| Piece {
                    value: w[c] * softplus(cell_sign(c) * z[i]),
                    cost,
                    cell: Cell::ALL[c],
                })
                .collect()
        })
        .collect()
}

/// `max_b sup_{Q in ball} E_Q[branch b integrand]` for fixed weights.
pub fn worst_case_objective(
    data: &Dataset,
    beta: &ModelWeights,
    eta: f64,
    ambiguity: &AmbiguityConfig,
) -> Result<f64, TrainError> {
    ambiguity.validate()?;
    let stats = data.marginal_stats();
    let r = check_penalty(&stats, eta)?;
    if beta.dim() != data.dim() {
        return Err(ModelError::DimensionMismatch {
            weights: beta.dim(),
            features: data.dim(),
        }
        .into());
    }
    if ambiguity.rho == 0.0 {
        return fair_objective(data, beta, eta);
    }
    let dual_norm = ambiguity.metric.norm.dual_eval(&beta.beta);
    if ambiguity.metric.is_infinite() {
        let t = branch_objectives(data, beta, eta)?;
        return Ok((0..2)
            .map(|b| t[b] + ambiguity.rho * branch_scale(r, eta, BRANCHES[b]) * dual_norm)
            .fold(f64::NEG_INFINITY, f64::max));
    }
    let graph = CellGraph::new(&stats, &ambiguity.metric);
    let z = crate::unfairness::margins(data, beta)?;
    let mut best = f64::NEG_INFINITY;
    for (b, br) in BRANCHES.into_iter().enumerate() {
        let w = branch_weights(r, eta, br);
        let dual = MarginalDual::new(
            branch_pieces(data, &graph, &w, &z),
            stats.p_hat_cells(),
            ambiguity.rho,
            branch_scale(r, eta, BRANCHES[b]) * dual_norm,
        )?;
        best = best.max(dual.solve()?.value);
    }
    Ok(best)
}

/// A point of the robust program after eliminating `nu` and `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustPoint {
    pub beta: Vec<f64>,
    /// Per branch, ordered like [`BRANCHES`].
    pub lambda: [f64; 2],
    /// Per branch, indexed like [`Cell::ALL`].
    pub mu: [[f64; 4]; 2],
}

impl RobustPoint {
    /// Flattened layout `[beta, lambda_10, lambda_01, mu_10, mu_01]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.extend(self.lambda);
        v.extend(self.mu[0]);
        v.extend(self.mu[1]);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let p = v.len() - 10;
        let mut mu = [[0.0; 4]; 2];
        mu[0].copy_from_slice(&v[p + 2..p + 6]);
        mu[1].copy_from_slice(&v[p + 6..p + 10]);
        Self {
            beta: v[..p].to_vec(),
            lambda: [v[p], v[p + 1]],
            mu,
        }
    }
}

/// Robust objective with `nu` eliminated, and its gradient in the
/// [`RobustPoint::to_vec`] layout:
///
/// `max_b rho lambda_b + sum_c p_c mu_bc + mean_i max_c (v_b(c, x_i) - cost lambda_b - mu_bc)`.
///
/// Valid where `lambda_b >= c_b ||beta||_*`; the norm constraint is not
/// checked. Ties in either maximum go to the lowest index.
pub fn eliminated_objective(
    data: &Dataset,
    eta: f64,
    ambiguity: &AmbiguityConfig,
    point: &RobustPoint,
) -> Result<(f64, Vec<f64>), TrainError> {
    ambiguity.validate()?;
    let stats = data.marginal_stats();
    let r = check_penalty(&stats, eta)?;
    let beta = ModelWeights::new(point.beta.clone())?;
    let z = crate::unfairness::margins(data, &beta)?;
    let graph = CellGraph::new(&stats, &ambiguity.metric);
    let p_hat = stats.p_hat_cells();
    let p = data.dim();
    let inv = 1.0 / data.len() as f64;

    let mut best: Option<(f64, Vec<f64>)> = None;
    for (b, br) in BRANCHES.into_iter().enumerate() {
        let w = branch_weights(r, eta, br);
        let lambda = point.lambda[b];
        let mu = &point.mu[b];
        let mut grad = vec![0.0; p + 10];
        let mut value = ambiguity.rho * lambda + dot(&p_hat, mu);
        grad[p + b] = ambiguity.rho;
        for c in 0..4 {
            grad[p + 2 + 4 * b + c] = p_hat[c];
        }
        for i in 0..data.len() {
            let from = data.cell(i).index();
            let mut top = (f64::NEG_INFINITY, 0, 0.0, 0.0);
            for (c, cost) in graph.destinations(from) {
                let (v, d1, _) = smooth_piece(w[c], cell_sign(c), z[i]);
                let val = v - cost * lambda - mu[c];
                if val > top.0 {
                    top = (val, c, cost, d1);
                }
            }
            let (val, c, cost, d1) = top;
            value += inv * val;
            grad[p + b] -= inv * cost;
            grad[p + 2 + 4 * b + c] -= inv;
            for (j, xv) in data.row(i).iter().enumerate() {
                grad[j] += inv * d1 * xv;
            }
        }
        if best.as_ref().is_none_or(|(v, _)| value > *v) {
            best = Some((value, grad));
        }
    }
    Ok(best.expect("two branches"))
}
