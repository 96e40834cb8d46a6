//! Dense two-phase primal simplex.
//!
//! Instances are converted to the standard form `min c'x, Ax = b, x >= 0, b >= 0`,
//! then rows and columns are rescaled by powers of two. Rows with a usable
//! slack start with it in the basis, the others with an artificial column.
//! Pivoting uses Dantzig's rule until a run of degenerate pivots is observed
//! and Bland's rule afterwards, which keeps the method deterministic and
//! cycle free. When the scaled coefficients still span many decades the
//! tableau is carried in double-double arithmetic. For plain `f64` runs the
//! basic solution and the dual prices are recomputed from the original matrix
//! with a refined LU solve, and the duality gap is measured from those values.

use nalgebra::{DMatrix, DVector};
use twofloat::TwoFloat;
use thiserror::Error;

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;
const DEGENERATE_STREAK_FOR_BLAND: usize = 50;
/// Coefficient spread above which `Precision::Auto` switches to double-double.
const AUTO_EXTENDED_RANGE: f64 = 1e6;
const RATIO_TIE: f64 = 1e-12;
const SCALING_PASSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A linear program over `n` variables with per-variable bounds.
///
/// Bounds default to `[0, +inf)`; use `f64::NEG_INFINITY` / `f64::INFINITY`
/// for free directions.
#[derive(Debug, Clone)]
pub struct LpInstance {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<LinearConstraint>,
    pub bounds: Vec<(f64, f64)>,
}

impl LpInstance {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            sense,
            objective,
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn minimize(objective: Vec<f64>) -> Self {
        Self::new(Sense::Minimize, objective)
    }

    pub fn maximize(objective: Vec<f64>) -> Self {
        Self::new(Sense::Maximize, objective)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(LinearConstraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) {
        self.bounds[var] = (lo, hi);
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.bounds.len() != n {
            return Err(LpError::DimensionMismatch {
                what: "bounds",
                expected: n,
                found: self.bounds.len(),
            });
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite("objective"));
        }
        for con in &self.constraints {
            if con.coeffs.len() != n {
                return Err(LpError::DimensionMismatch {
                    what: "constraint",
                    expected: n,
                    found: con.coeffs.len(),
                });
            }
            if con.coeffs.iter().any(|c| !c.is_finite()) || !con.rhs.is_finite() {
                return Err(LpError::NonFinite("constraint"));
            }
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::InvalidBounds { var: j, lo, hi });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("{what} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("invalid bounds [{lo}, {hi}] for variable {var}")]
    InvalidBounds { var: usize, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    /// Pivoting broke down on round-off before reaching a verdict.
    NumericalFailure,
}

/// Result of [`solve_lp`].
///
/// `dual` holds one price per constraint in the sign convention of the
/// instance's sense (shadow price of the right-hand side). The bound
/// multipliers are folded into `dual_objective`.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
    /// Largest violation of a constraint or bound by `primal`.
    pub primal_infeasibility: f64,
    /// Largest violation of dual feasibility (negative reduced cost) in the standard form.
    pub dual_infeasibility: f64,
    pub pivots: usize,
}

impl LpSolution {
    fn empty(status: LpStatus, n: usize, m: usize, pivots: usize) -> Self {
        Self {
            status,
            primal: vec![f64::NAN; n],
            dual: vec![f64::NAN; m],
            objective: f64::NAN,
            dual_objective: f64::NAN,
            duality_gap: f64::NAN,
            primal_infeasibility: f64::NAN,
            dual_infeasibility: f64::NAN,
            pivots,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = offset + col
    Shift { col: usize, offset: f64 },
    /// x = offset - col
    Mirror { col: usize, offset: f64 },
    /// x = pos - neg
    Split { pos: usize, neg: usize },
    Fixed(f64),
}

struct StandardForm {
    /// Row-major m x n_struct matrix (structural + slack columns, no artificials).
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    m: usize,
    n: usize,
    obj_offset: f64,
    var_map: Vec<VarMap>,
    /// For each original constraint: its row and the sign applied to make b >= 0.
    row_of_constraint: Vec<(usize, f64)>,
    /// Equilibration factors: the stored system is `diag(row) A diag(col)`.
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
    /// Per row, a slack column that can start basic in place of the artificial.
    starting_basis: Vec<Option<usize>>,
}

impl StandardForm {
    fn build(inst: &LpInstance) -> Self {
        let sign_obj = match inst.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut n_struct = 0usize;
        let mut var_map = Vec::with_capacity(inst.num_vars());
        let mut upper_rows: Vec<(usize, f64)> = Vec::new();
        for &(lo, hi) in &inst.bounds {
            let map = if lo == hi {
                VarMap::Fixed(lo)
            } else if lo.is_finite() {
                let col = n_struct;
                n_struct += 1;
                if hi.is_finite() {
                    upper_rows.push((col, hi - lo));
                }
                VarMap::Shift { col, offset: lo }
            } else if hi.is_finite() {
                let col = n_struct;
                n_struct += 1;
                VarMap::Mirror { col, offset: hi }
            } else {
                let pos = n_struct;
                n_struct += 2;
                VarMap::Split { pos, neg: pos + 1 }
            };
            var_map.push(map);
        }

        // Rows in structural coordinates: (coeffs, relation, rhs).
        let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
        for con in &inst.constraints {
            let mut coeffs = vec![0.0; n_struct];
            let mut rhs = con.rhs;
            for (j, &a) in con.coeffs.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                match var_map[j] {
                    VarMap::Shift { col, offset } => {
                        coeffs[col] += a;
                        rhs -= a * offset;
                    }
                    VarMap::Mirror { col, offset } => {
                        coeffs[col] -= a;
                        rhs -= a * offset;
                    }
                    VarMap::Split { pos, neg } => {
                        coeffs[pos] += a;
                        coeffs[neg] -= a;
                    }
                    VarMap::Fixed(v) => rhs -= a * v,
                }
            }
            rows.push((coeffs, con.relation, rhs));
        }
        for &(col, ub) in &upper_rows {
            let mut coeffs = vec![0.0; n_struct];
            coeffs[col] = 1.0;
            rows.push((coeffs, Relation::Le, ub));
        }

        let mut obj_offset = 0.0;
        let mut c = vec![0.0; n_struct];
        for (j, &cj) in inst.objective.iter().enumerate() {
            let cj = sign_obj * cj;
            match var_map[j] {
                VarMap::Shift { col, offset } => {
                    c[col] += cj;
                    obj_offset += cj * offset;
                }
                VarMap::Mirror { col, offset } => {
                    c[col] -= cj;
                    obj_offset += cj * offset;
                }
                VarMap::Split { pos, neg } => {
                    c[pos] += cj;
                    c[neg] -= cj;
                }
                VarMap::Fixed(v) => obj_offset += cj * v,
            }
        }

        let m = rows.len();
        let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let n = n_struct + n_slack;
        c.resize(n, 0.0);
        let mut a = vec![0.0; m * n];
        let mut b = vec![0.0; m];
        let mut row_of_constraint = Vec::with_capacity(inst.constraints.len());
        let mut starting_basis = Vec::with_capacity(m);
        let mut slack = n_struct;
        for (i, (coeffs, rel, rhs)) in rows.into_iter().enumerate() {
            let flip = if rhs < 0.0 { -1.0 } else { 1.0 };
            let row = &mut a[i * n..(i + 1) * n];
            for (j, v) in coeffs.into_iter().enumerate() {
                row[j] = flip * v;
            }
            let sign = match rel {
                Relation::Le => flip,
                Relation::Ge => -flip,
                Relation::Eq => 0.0,
            };
            if sign != 0.0 {
                row[slack] = sign;
                starting_basis.push(if sign > 0.0 { Some(slack) } else { None });
                slack += 1;
            } else {
                starting_basis.push(None);
            }
            b[i] = flip * rhs;
            if i < inst.constraints.len() {
                row_of_constraint.push((i, flip));
            }
        }
        let (row_scale, col_scale) = equilibrate(&mut a, &mut b, &mut c, m, n);
        Self {
            a,
            b,
            c,
            m,
            n,
            obj_offset,
            var_map,
            row_of_constraint,
            row_scale,
            col_scale,
            starting_basis,
        }
    }
}

/// Nearest power of two to `1 / v`, so rescaling is exact.
fn inverse_pow2(v: f64) -> f64 {
    if v > 0.0 && v.is_finite() {
        (-v.log2().round()).exp2()
    } else {
        1.0
    }
}

/// Geometric-mean scaling of rows and columns, a few alternating passes.
/// Brings the spread of each row and column down to roughly its square
/// root, which keeps legitimate small pivots well above the tolerance.
fn equilibrate(a: &mut [f64], b: &mut [f64], c: &mut [f64], m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let spread = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals
            .filter(|v| *v != 0.0)
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
        if hi == 0.0 {
            1.0
        } else {
            (lo * hi).sqrt()
        }
    };
    let mut row_scale = vec![1.0; m];
    let mut col_scale = vec![1.0; n];
    for _ in 0..SCALING_PASSES {
        for i in 0..m {
            let r = inverse_pow2(spread(&mut a[i * n..(i + 1) * n].iter().copied()));
            a[i * n..(i + 1) * n].iter_mut().for_each(|v| *v *= r);
            b[i] *= r;
            row_scale[i] *= r;
        }
        for j in 0..n {
            let s = inverse_pow2(spread(&mut (0..m).map(|i| a[i * n + j])));
            for i in 0..m {
                a[i * n + j] *= s;
            }
            c[j] *= s;
            col_scale[j] *= s;
        }
    }
    (row_scale, col_scale)
}

/// Arithmetic used by the tableau. Plain `f64` for well scaled
/// instances, double-double when coefficients span many decades.
trait Scalar:
    Copy
    + PartialOrd
    + From<f64>
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
{
    fn to_f64(self) -> f64;
    fn zero() -> Self {
        Self::from(0.0)
    }
}

impl Scalar for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for TwoFloat {
    fn to_f64(self) -> f64 {
        self.hi() + self.lo()
    }
}

struct Tableau<T> {
    m: usize,
    /// structural + slack + artificial columns
    width: usize,
    n_real: usize,
    /// m rows of `width` entries.
    rows: Vec<T>,
    rhs: Vec<T>,
    cost: Vec<T>,
    basis: Vec<usize>,
    pivots: usize,
    max_pivots: usize,
    /// Undoes the column scaling when comparing reduced costs.
    price_weight: Vec<f64>,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl<T: Scalar> Tableau<T> {
    fn new(sf: &StandardForm, max_pivots: usize) -> Self {
        let m = sf.m;
        let width = sf.n + m;
        let mut rows = vec![T::zero(); m * width];
        for i in 0..m {
            for j in 0..sf.n {
                rows[i * width + j] = T::from(sf.a[i * sf.n + j]);
            }
            rows[i * width + sf.n + i] = T::from(1.0);
        }
        Self {
            m,
            width,
            n_real: sf.n,
            rows,
            rhs: sf.b.iter().map(|&v| T::from(v)).collect(),
            cost: vec![T::zero(); width],
            // Nonnegative slacks start basic; artificials only where needed.
            basis: (0..m).map(|i| sf.starting_basis[i].unwrap_or(sf.n + i)).collect(),
            pivots: 0,
            max_pivots,
            price_weight: sf.col_scale.iter().map(|s| 1.0 / s).chain(std::iter::repeat_n(1.0, m)).collect(),
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.rows[i * self.width + j].to_f64()
    }

    #[inline]
    fn rhs_at(&self, i: usize) -> f64 {
        self.rhs[i].to_f64()
    }

    /// Reduced cost of column `j` in the units of the unscaled problem.
    #[inline]
    fn reduced(&self, j: usize) -> f64 {
        self.cost[j].to_f64() * self.price_weight[j]
    }

    /// Sets reduced costs for the cost vector `full_cost` (length `width`).
    fn price(&mut self, full_cost: &[f64]) {
        for (c, &v) in self.cost.iter_mut().zip(full_cost) {
            *c = T::from(v);
        }
        for i in 0..self.m {
            let cb = full_cost[self.basis[i]];
            if cb != 0.0 {
                let cb = T::from(cb);
                let row = &self.rows[i * self.width..(i + 1) * self.width];
                for (cj, &aij) in self.cost.iter_mut().zip(row) {
                    *cj = *cj - cb * aij;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width;
        let zero = T::zero();
        let piv = self.rows[r * w + q];
        {
            let row = &mut self.rows[r * w..(r + 1) * w];
            for v in row.iter_mut() {
                *v = *v / piv;
            }
            row[q] = T::from(1.0);
        }
        self.rhs[r] = self.rhs[r] / piv;
        let pivot_row: Vec<T> = self.rows[r * w..(r + 1) * w].to_vec();
        let pivot_rhs = self.rhs[r];
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.rows[i * w + q];
            if f == zero {
                continue;
            }
            let row = &mut self.rows[i * w..(i + 1) * w];
            for (v, &p) in row.iter_mut().zip(&pivot_row) {
                if p != zero {
                    *v = *v - f * p;
                }
            }
            row[q] = zero;
            self.rhs[i] = self.rhs[i] - f * pivot_rhs;
        }
        let f = self.cost[q];
        if f != zero {
            for (v, &p) in self.cost.iter_mut().zip(&pivot_row) {
                if p != zero {
                    *v = *v - f * p;
                }
            }
            self.cost[q] = zero;
        }
        self.basis[r] = q;
        self.pivots += 1;
    }

    fn run_phase(&mut self, allowed: usize) -> PhaseOutcome {
        let mut degenerate_streak = 0usize;
        let mut bland = false;
        loop {
            if self.pivots >= self.max_pivots {
                return PhaseOutcome::IterationLimit;
            }
            let scale = 1.0 + (0..allowed).fold(0.0f64, |a, j| a.max(self.reduced(j).abs()));
            let tol = COST_TOL * scale.min(1e3);
            let entering = if bland {
                (0..allowed).find(|&j| self.reduced(j) < -tol)
            } else {
                let mut best = None;
                let mut best_val = -tol;
                for j in 0..allowed {
                    let rc = self.reduced(j);
                    if rc < best_val {
                        best_val = rc;
                        best = Some(j);
                    }
                }
                best
            };
            let Some(q) = entering else {
                return PhaseOutcome::Optimal;
            };
            let col_peak = (0..self.m).fold(0.0f64, |acc, i| acc.max(self.at(i, q).abs()));
            let pivot_tol = PIVOT_TOL * col_peak.min(1.0);
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.m {
                let aiq = self.at(i, q);
                if aiq > pivot_tol {
                    let ratio = self.rhs_at(i).max(0.0) / aiq;
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            // Relative ties: rows may be scaled far below one.
                            let slack = RATIO_TIE * best_ratio;
                            ratio < best_ratio - slack
                                || (ratio <= best_ratio + slack && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        best_ratio = best_ratio.min(ratio);
                        leave = Some(i);
                    }
                }
            }
            let Some(r) = leave else {
                return PhaseOutcome::Unbounded;
            };
            if best_ratio <= 1e-12 {
                degenerate_streak += 1;
                if degenerate_streak >= DEGENERATE_STREAK_FOR_BLAND {
                    bland = true;
                }
            } else {
                degenerate_streak = 0;
            }
            self.pivot(r, q);
        }
    }

    /// Pivots zero-level artificials out of the basis where possible.
    fn expel_artificials(&mut self) {
        for r in 0..self.m {
            if self.basis[r] < self.n_real {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.n_real {
                let v = self.at(r, j).abs();
                if v > 1e-9 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                self.pivot(r, j);
            }
        }
    }
}

/// Arithmetic for the simplex iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    /// Double-double when the scaled coefficients span more than six
    /// decades, plain `f64` otherwise.
    #[default]
    Auto,
    Double,
    Extended,
}

/// Options for [`solve_lp_with`].
#[derive(Debug, Clone, Copy)]
pub struct LpOptions {
    pub max_pivots: usize,
    pub precision: Precision,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            max_pivots: 200_000,
            precision: Precision::Auto,
        }
    }
}

pub fn solve_lp(inst: &LpInstance) -> Result<LpSolution, LpError> {
    solve_lp_with(inst, LpOptions::default())
}

pub fn solve_lp_with(inst: &LpInstance, opts: LpOptions) -> Result<LpSolution, LpError> {
    inst.validate()?;
    let n_orig = inst.num_vars();
    let m_orig = inst.constraints.len();
    let sf = StandardForm::build(inst);
    let extended = match opts.precision {
        Precision::Double => false,
        Precision::Extended => true,
        Precision::Auto => coefficient_range(&sf.a) > AUTO_EXTENDED_RANGE,
    };
    let outcome = if extended {
        simplex::<TwoFloat>(&sf, opts.max_pivots).map(|tab| {
            let pivots = tab.pivots;
            (tableau_solution(&sf, &tab), pivots)
        })
    } else {
        simplex::<f64>(&sf, opts.max_pivots).map(|tab| {
            let pivots = tab.pivots;
            (refine(&sf, &tab), pivots)
        })
    };
    match outcome {
        Ok(((x_std, y_std), pivots)) => Ok(finish(inst, &sf, &x_std, &y_std, pivots)),
        Err((status, pivots)) => Ok(LpSolution::empty(status, n_orig, m_orig, pivots)),
    }
}

/// Ratio of the largest to the smallest nonzero magnitude.
fn coefficient_range(a: &[f64]) -> f64 {
    let (lo, hi) = a
        .iter()
        .filter(|v| **v != 0.0)
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
    if hi == 0.0 {
        1.0
    } else {
        hi / lo
    }
}

/// Both phases; returns the final tableau or a terminal status.
fn simplex<T: Scalar>(sf: &StandardForm, max_pivots: usize) -> Result<Tableau<T>, (LpStatus, usize)> {
    let mut tab = Tableau::<T>::new(sf, max_pivots);

    // Phase 1: minimise the sum of artificials.
    let mut phase1_cost = vec![0.0; tab.width];
    for c in phase1_cost[sf.n..].iter_mut() {
        *c = 1.0;
    }
    tab.price(&phase1_cost);
    match tab.run_phase(tab.width) {
        PhaseOutcome::IterationLimit => return Err((LpStatus::IterationLimit, tab.pivots)),
        // Phase one is bounded below; an unbounded ray can only come from round-off.
        PhaseOutcome::Unbounded => return Err((LpStatus::NumericalFailure, tab.pivots)),
        PhaseOutcome::Optimal => {}
    }
    let b_scale = 1.0 + sf.b.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let infeas: f64 = (0..tab.m)
        .filter(|&i| tab.basis[i] >= sf.n)
        .map(|i| tab.rhs_at(i))
        .sum();
    if infeas > 1e-9 * b_scale {
        return Err((LpStatus::Infeasible, tab.pivots));
    }
    tab.expel_artificials();

    // Phase 2 over the real columns only.
    let mut phase2_cost = vec![0.0; tab.width];
    phase2_cost[..sf.n].copy_from_slice(&sf.c);
    tab.price(&phase2_cost);
    match tab.run_phase(sf.n) {
        PhaseOutcome::IterationLimit => Err((LpStatus::IterationLimit, tab.pivots)),
        PhaseOutcome::Unbounded => Err((LpStatus::Unbounded, tab.pivots)),
        PhaseOutcome::Optimal => Ok(tab),
    }
}

/// Basic solution and prices read off an extended precision tableau,
/// which is already more accurate than a refactorisation in `f64`.
fn tableau_solution<T: Scalar>(sf: &StandardForm, tab: &Tableau<T>) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; sf.n];
    for (k, &j) in tab.basis.iter().enumerate() {
        if j < sf.n {
            x[j] = tab.rhs_at(k).max(0.0);
        }
    }
    // The artificial column of row i is e_i at zero cost.
    let y = (0..sf.m).map(|i| -tab.cost[sf.n + i].to_f64()).collect();
    (x, y)
}

/// Error-free product `a * b = p + e`.
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// `rhs - mat * x` accumulated with compensated summation.
fn residual(mat: &DMatrix<f64>, x: &DVector<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(mat.nrows(), |i, _| {
        let mut sum = rhs[i];
        let mut comp = 0.0;
        for j in 0..mat.ncols() {
            let (p, e) = two_prod(-mat[(i, j)], x[j]);
            let t = sum + p;
            comp += if sum.abs() >= p.abs() { (sum - t) + p } else { (p - t) + sum };
            comp += e;
            sum = t;
        }
        sum + comp
    })
}

/// LU solve followed by a few rounds of iterative refinement, which
/// recovers digits lost to badly scaled bases.
fn solve_refined(mat: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = mat.clone().lu();
    let mut x = lu.solve(rhs)?;
    for _ in 0..3 {
        let r = residual(mat, &x, rhs);
        let Some(dx) = lu.solve(&r) else { break };
        if !dx.iter().all(|v| v.is_finite()) {
            break;
        }
        x += dx;
    }
    Some(x)
}

/// Recomputes the basic solution and the dual prices from the original matrix.
fn refine(sf: &StandardForm, tab: &Tableau<f64>) -> (Vec<f64>, Vec<f64>) {
    let m = sf.m;
    let column = |j: usize, i: usize| -> f64 {
        if j < sf.n {
            sf.a[i * sf.n + j]
        } else if j - sf.n == i {
            1.0
        } else {
            0.0
        }
    };
    let mut x = vec![0.0; sf.n];
    let mut y = vec![0.0; m];
    if m == 0 {
        return (x, y);
    }
    let bmat = DMatrix::from_fn(m, m, |i, k| column(tab.basis[k], i));
    let cb = DVector::from_fn(m, |k, _| {
        let j = tab.basis[k];
        if j < sf.n {
            sf.c[j]
        } else {
            0.0
        }
    });
    let xb = solve_refined(&bmat, &DVector::from_column_slice(&sf.b));
    let yv = solve_refined(&bmat.transpose(), &cb);
    match (xb, yv) {
        (Some(xb), Some(yv)) if xb.iter().chain(yv.iter()).all(|v| v.is_finite()) => {
            for k in 0..m {
                let j = tab.basis[k];
                if j < sf.n {
                    x[j] = xb[k].max(0.0);
                }
            }
            y.copy_from_slice(yv.as_slice());
        }
        _ => {
            for k in 0..m {
                let j = tab.basis[k];
                if j < sf.n {
                    x[j] = tab.rhs[k].max(0.0);
                }
            }
            // Fallback: prices from the reduced costs of the artificial columns.
            for i in 0..m {
                y[i] = -tab.cost[sf.n + i];
            }
        }
    }
    (x, y)
}

fn finish(inst: &LpInstance, sf: &StandardForm, x: &[f64], y: &[f64], pivots: usize) -> LpSolution {
    let sign_obj = match inst.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let std_primal: f64 = sf.c.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + sf.obj_offset;
    let std_dual: f64 = sf.b.iter().zip(y).map(|(b, v)| b * v).sum::<f64>() + sf.obj_offset;
    let mut dual_infeasibility = 0.0f64;
    for j in 0..sf.n {
        let mut reduced = sf.c[j];
        for i in 0..sf.m {
            reduced -= sf.a[i * sf.n + j] * y[i];
        }
        // Undo the column scaling so the measure is in original units.
        dual_infeasibility = dual_infeasibility.max(-reduced / sf.col_scale[j]);
    }
    let x: Vec<f64> = x.iter().zip(&sf.col_scale).map(|(v, s)| v * s).collect();
    let y: Vec<f64> = y.iter().zip(&sf.row_scale).map(|(v, r)| v * r).collect();
    let primal: Vec<f64> = sf
        .var_map
        .iter()
        .map(|map| match *map {
            VarMap::Shift { col, offset } => offset + x[col],
            VarMap::Mirror { col, offset } => offset - x[col],
            VarMap::Split { pos, neg } => x[pos] - x[neg],
            VarMap::Fixed(v) => v,
        })
        .collect();

    let dual: Vec<f64> = sf
        .row_of_constraint
        .iter()
        .map(|&(row, flip)| sign_obj * flip * y[row])
        .collect();

    let objective: f64 = inst.objective.iter().zip(&primal).map(|(c, v)| c * v).sum();
    let mut primal_infeasibility = 0.0f64;
    for con in &inst.constraints {
        let lhs: f64 = con.coeffs.iter().zip(&primal).map(|(a, v)| a * v).sum();
        let viol = match con.relation {
            Relation::Le => lhs - con.rhs,
            Relation::Ge => con.rhs - lhs,
            Relation::Eq => (lhs - con.rhs).abs(),
        };
        primal_infeasibility = primal_infeasibility.max(viol);
    }
    for (v, &(lo, hi)) in primal.iter().zip(&inst.bounds) {
        primal_infeasibility = primal_infeasibility.max(lo - v).max(v - hi);
    }

    LpSolution {
        status: LpStatus::Optimal,
        primal,
        dual,
        objective,
        dual_objective: sign_obj * std_dual,
        duality_gap: (std_primal - std_dual).abs(),
        primal_infeasibility: primal_infeasibility.max(0.0),
        dual_infeasibility,
        pivots,
    }
}
