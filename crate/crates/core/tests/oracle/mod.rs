//! Reference computations for the integration and acceptance tests.
//!
//! Each oracle works from the primal side (explicit couplings, grid search,
//! or a minimax reformulation) and shares no code with the library paths it
//! checks beyond the generic LP solver.

#![allow(dead_code)]

use fairdro_core::{Dataset, Norm};
use fairdro_solver::{solve_lp, LpInstance, Relation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    0.5 * (1.0 + (0.5 * z).tanh())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(kind: Norm, v: &[f64]) -> f64 {
    match kind {
        Norm::L1 => v.iter().map(|x| x.abs()).sum(),
        Norm::L2 => dot(v, v).sqrt(),
        Norm::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
    }
}

pub fn dual_norm(kind: Norm, v: &[f64]) -> f64 {
    norm(
        match kind {
            Norm::L1 => Norm::Linf,
            Norm::L2 => Norm::L2,
            Norm::Linf => Norm::L1,
        },
        v,
    )
}

fn dist(kind: Norm, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(kind, &d)
}

/// Random dataset with every `(a, y)` cell nonempty; labels follow a noisy
/// logistic model so the data is rarely separable.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize, scale: f64) -> Dataset {
    assert!(n >= 4);
    let w: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut sens = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let a: u8 = if i < 4 { (i / 2) as u8 } else { rng.random_range(0..2) };
        let x: Vec<f64> = (0..p)
            .map(|j| {
                let g: f64 = StandardNormal.sample(rng);
                scale * g + if j == 0 { 0.5 * a as f64 } else { 0.0 }
            })
            .collect();
        let y: u8 = if i < 4 {
            (i % 2) as u8
        } else {
            u8::from(rng.random::<f64>() < sigmoid(dot(&w, &x)))
        };
        rows.push(x);
        sens.push(a);
        labels.push(y);
    }
    Dataset::new(rows, sens, labels).unwrap()
}

fn counts(data: &Dataset) -> [[usize; 2]; 2] {
    let mut c = [[0usize; 2]; 2];
    for i in 0..data.len() {
        c[data.sensitive()[i] as usize][data.labels()[i] as usize] += 1;
    }
    c
}

/// Weight of the sample-level integrand in cell `(a, y)` for branch `(g, g2)`.
pub fn cell_weight(data: &Dataset, eta: f64, (g, g2): (u8, u8), a: u8, y: u8) -> f64 {
    let c = counts(data);
    let n = data.len() as f64;
    if y == 0 {
        1.0
    } else if a == g {
        1.0 - eta * n / c[g as usize][1] as f64
    } else {
        debug_assert_eq!(a, g2);
        1.0 + eta * n / c[g2 as usize][1] as f64
    }
}

/// `w softplus(+-z)` for a sample in cell `(a, y)` at margin `z`.
pub fn integrand(data: &Dataset, eta: f64, branch: (u8, u8), a: u8, y: u8, z: f64) -> f64 {
    let w = cell_weight(data, eta, branch, a, y);
    w * if y == 1 { softplus(-z) } else { softplus(z) }
}

/// Fair objective evaluated directly from its definition: mean log-loss plus
/// `eta` times the gap in mean log-scores between the groups' positives.
pub fn fair_objective_direct(data: &Dataset, beta: &[f64], eta: f64) -> f64 {
    let n = data.len();
    let mut loss = 0.0;
    let mut log_h = [0.0; 2];
    let mut pos = [0.0; 2];
    for i in 0..n {
        let z = dot(beta, data.row(i));
        let y = data.labels()[i];
        loss += if y == 1 { softplus(-z) } else { softplus(z) };
        if y == 1 {
            let a = data.sensitive()[i] as usize;
            log_h[a] += -softplus(-z);
            pos[a] += 1.0;
        }
    }
    loss / n as f64 + eta * (log_h[1] / pos[1] - log_h[0] / pos[0]).abs()
}

/// Exhaustive grid search over `[-10, 10]^2` with step 0.01, followed by a
/// compass search around the best grid point.
pub fn grid_minimum(f: impl Fn(&[f64]) -> f64) -> (f64, Vec<f64>) {
    let mut best = (f64::INFINITY, vec![0.0, 0.0]);
    for i in 0..=2000 {
        let b0 = -10.0 + 0.01 * i as f64;
        for j in 0..=2000 {
            let b = [b0, -10.0 + 0.01 * j as f64];
            let v = f(&b);
            if v < best.0 {
                best = (v, b.to_vec());
            }
        }
    }
    let dirs = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)];
    let mut step = 0.01;
    while step > 1e-9 {
        let mut moved = false;
        for (dx, dy) in dirs {
            let cand = [best.1[0] + step * dx, best.1[1] + step * dy];
            let v = f(&cand);
            if v < best.0 {
                best = (v, cand.to_vec());
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    best
}

/// Minimises `sum_i w_i softplus(s_i x_i'beta) / N` by damped Newton.
fn smooth_minimum(data: &Dataset, weights: &[f64]) -> (f64, Vec<f64>) {
    let n = data.len();
    let p = data.dim();
    let f = |b: &[f64]| -> f64 {
        (0..n)
            .map(|i| {
                let z = dot(b, data.row(i));
                let s = if data.labels()[i] == 1 { -1.0 } else { 1.0 };
                weights[i] * softplus(s * z)
            })
            .sum::<f64>()
            / n as f64
    };
    let mut beta = vec![0.0; p];
    for _ in 0..200 {
        let mut g = vec![0.0; p];
        let mut h = vec![vec![0.0; p]; p];
        for i in 0..n {
            let x = data.row(i);
            let z = dot(&beta, x);
            let s = if data.labels()[i] == 1 { -1.0 } else { 1.0 };
            let d1 = weights[i] * s * sigmoid(s * z);
            let d2 = weights[i] * sigmoid(z) * sigmoid(-z);
            for j in 0..p {
                g[j] += d1 * x[j] / n as f64;
                for k in 0..p {
                    h[j][k] += d2 * x[j] * x[k] / n as f64;
                }
            }
        }
        if norm(Norm::L2, &g) < 1e-13 {
            break;
        }
        let step = solve_dense(h, g);
        let f0 = f(&beta);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, d)| b - t * d).collect();
            if f(&cand) <= f0 || t < 1e-12 {
                beta = cand;
                break;
            }
            t *= 0.5;
        }
    }
    (f(&beta), beta)
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let m = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= m * a[c][k];
            }
            b[r] -= m * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// `min_beta max(T_10, T_01)` through `max_theta min_beta theta T_10 + (1 - theta) T_01`,
/// with Newton inside and golden-section search over `theta`.
pub fn fair_minimax(data: &Dataset, eta: f64) -> (f64, Vec<f64>) {
    let inner = |theta: f64| {
        let w: Vec<f64> = (0..data.len())
            .map(|i| {
                let (a, y) = (data.sensitive()[i], data.labels()[i]);
                theta * cell_weight(data, eta, (1, 0), a, y) + (1.0 - theta) * cell_weight(data, eta, (0, 1), a, y)
            })
            .collect();
        smooth_minimum(data, &w)
    };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut m1 = hi - phi * (hi - lo);
    let mut m2 = lo + phi * (hi - lo);
    let mut f1 = inner(m1).0;
    let mut f2 = inner(m2).0;
    for _ in 0..90 {
        if f1 < f2 {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + phi * (hi - lo);
            f2 = inner(m2).0;
        } else {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - phi * (hi - lo);
            f1 = inner(m1).0;
        }
    }
    let mut best = inner(0.5 * (lo + hi));
    for end in [0.0, 1.0] {
        let cand = inner(end);
        if cand.0 > best.0 {
            best = cand;
        }
    }
    best
}

fn p_hat(data: &Dataset) -> [[f64; 2]; 2] {
    let c = counts(data);
    let n = data.len() as f64;
    [[c[0][0] as f64 / n, c[0][1] as f64 / n], [c[1][0] as f64 / n, c[1][1] as f64 / n]]
}

fn kappa_cost(kappa: f64, u: u8, v: u8) -> f64 {
    if u == v {
        0.0
    } else {
        kappa
    }
}

/// `sup E_Q[phi]` over couplings of the empirical distribution with
/// candidate destinations `(point, a, y)`, keeping the `(A, Y)` marginal
/// and spending at most `rho`.
pub fn primal_transport_sup(
    data: &Dataset,
    candidates: &[Vec<Vec<f64>>],
    reward: impl Fn(&[f64], u8, u8) -> f64,
    feature_norm: Norm,
    kappa_a: f64,
    kappa_y: f64,
    rho: f64,
) -> f64 {
    let n = data.len();
    let ph = p_hat(data);
    let mut vars: Vec<(usize, usize, u8, u8, f64, f64)> = Vec::new();
    for i in 0..n {
        let (ai, yi) = (data.sensitive()[i], data.labels()[i]);
        for (k, x) in candidates[i].iter().enumerate() {
            for a in 0..2u8 {
                for y in 0..2u8 {
                    let cost = dist(feature_norm, data.row(i), x) + kappa_cost(kappa_a, ai, a) + kappa_cost(kappa_y, yi, y);
                    if cost.is_finite() && ph[a as usize][y as usize] > 0.0 {
                        vars.push((i, k, a, y, cost, reward(x, a, y)));
                    }
                }
            }
        }
    }
    let mut lp = LpInstance::maximize(vars.iter().map(|v| v.5).collect());
    for i in 0..n {
        let row = vars.iter().map(|v| if v.0 == i { 1.0 } else { 0.0 }).collect();
        lp.add_constraint(row, Relation::Eq, 1.0 / n as f64);
    }
    for a in 0..2u8 {
        for y in 0..2u8 {
            if ph[a as usize][y as usize] == 0.0 {
                continue;
            }
            let row = vars.iter().map(|v| if v.2 == a && v.3 == y { 1.0 } else { 0.0 }).collect();
            lp.add_constraint(row, Relation::Eq, ph[a as usize][y as usize]);
        }
    }
    lp.add_constraint(vars.iter().map(|v| v.4).collect(), Relation::Le, rho);
    let sol = solve_lp(&lp).unwrap();
    assert!(sol.is_optimal(), "{:?}", sol.status);
    sol.objective
}

/// Unit-cost direction `v` with `beta'v = ||beta||_*` and `||v|| = 1`.
fn steepest_direction(kind: Norm, beta: &[f64]) -> Vec<f64> {
    match kind {
        Norm::L2 => {
            let n = norm(Norm::L2, beta);
            beta.iter().map(|b| b / n).collect()
        }
        Norm::L1 => {
            let j = (0..beta.len()).max_by(|&i, &k| beta[i].abs().total_cmp(&beta[k].abs())).unwrap();
            let mut v = vec![0.0; beta.len()];
            v[j] = beta[j].signum();
            v
        }
        Norm::Linf => beta.iter().map(|b| if *b == 0.0 { 0.0 } else { b.signum() }).collect(),
    }
}

/// Brute-force `V(a, a')` of the classifier `beta'x >= logit(tau)`: for each
/// sample the candidate features are every test point and, for every test
/// point, the two points just either side of its projection on the boundary.
#[allow(clippy::too_many_arguments)]
pub fn audit_primal(
    data: &Dataset,
    beta: &[f64],
    tau: f64,
    feature_norm: Norm,
    kappa_a: f64,
    kappa_y: f64,
    rho: f64,
    (g, g2): (u8, u8),
) -> f64 {
    let theta = (tau / (1.0 - tau)).ln();
    let v = steepest_direction(feature_norm, beta);
    let speed = dual_norm(feature_norm, beta);
    let mut pts: Vec<Vec<f64>> = Vec::new();
    for x in data.rows() {
        pts.push(x.to_vec());
        let m = dot(beta, x) - theta;
        let eps = 1e-10 * (1.0 + norm(Norm::L2, x));
        for side in [-1.0, 1.0] {
            let shift = -m / speed + side * eps;
            pts.push(x.iter().zip(&v).map(|(xi, vi)| xi + shift * vi).collect());
        }
    }
    let c = counts(data);
    let n = data.len() as f64;
    let r = [n / c[0][1] as f64, n / c[1][1] as f64];
    let reward = |x: &[f64], a: u8, y: u8| {
        let accept = dot(beta, x) >= theta;
        if y == 1 && accept && a == g {
            r[g as usize]
        } else if y == 1 && accept && a == g2 {
            -r[g2 as usize]
        } else {
            0.0
        }
    };
    let candidates = vec![pts; data.len()];
    primal_transport_sup(data, &candidates, reward, feature_norm, kappa_a, kappa_y, rho)
}

/// Brute-force worst-case branch value for scalar features: each sample may
/// move to any of 201 grid points spanning `x_i +- 5 rho N`.
pub fn robust_branch_primal(data: &Dataset, beta: f64, eta: f64, branch: (u8, u8), kappa_a: f64, kappa_y: f64, rho: f64) -> f64 {
    assert_eq!(data.dim(), 1);
    let n = data.len();
    let half = 5.0 * rho * n as f64;
    let candidates: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| {
            let x = data.row(i)[0];
            (0..201).map(|k| vec![x - half + 2.0 * half * k as f64 / 200.0]).collect()
        })
        .collect();
    let reward = |x: &[f64], a: u8, y: u8| {
        if y == 1 && a != branch.0 && a != branch.1 {
            unreachable!()
        }
        integrand(data, eta, branch, a, y, beta * x[0])
    };
    primal_transport_sup(data, &candidates, reward, Norm::L2, kappa_a, kappa_y, rho)
}
