mod oracle;

use fairdro_core::{
    eliminated_objective, empirical_unfairness, fair_objective, fit_drflr, fit_flr, fit_lr, log_loss,
    log_loss_gradient, log_score, log_score_gradient, worst_case_objective, AmbiguityConfig, Dataset, GroundMetric,
    ModelWeights, Norm, RobustPoint, TrainConfig, UnfairnessKind,
};
use rand::Rng;

fn half_bound(data: &Dataset) -> f64 {
    data.marginal_stats().max_eta() / 2.0
}

fn ambiguity(rho: f64, kappa: f64) -> AmbiguityConfig {
    AmbiguityConfig::new(rho, GroundMetric::new(Norm::L2, kappa, kappa).unwrap()).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn fair_fit_matches_the_grid_search() {
    let mut rng = oracle::rng(21);
    for case in 0..5 {
        let n = rng.random_range(12..=30);
        let data = oracle::random_dataset(&mut rng, n, 2, 1.5);
        let eta = half_bound(&data);
        let fit = fit_flr(&data, &TrainConfig::new(eta, AmbiguityConfig::default())).unwrap();
        let (grid, at) = oracle::grid_minimum(|b| oracle::fair_objective_direct(&data, b, eta));
        assert!(
            (fit.objective - grid).abs() <= 1e-3,
            "case {case}: fit {} at {:?} vs grid {grid} at {at:?}",
            fit.objective,
            fit.weights.beta
        );
    }
}

#[test]
fn fair_fit_matches_the_minimax_reformulation() {
    let mut rng = oracle::rng(22);
    for case in 0..10 {
        let n = rng.random_range(8..=40);
        let p = rng.random_range(1..=3);
        let data = oracle::random_dataset(&mut rng, n, p, 1.5);
        let eta = rng.random_range(0.0..1.0) * data.marginal_stats().max_eta();
        let fit = fit_flr(&data, &TrainConfig::new(eta, AmbiguityConfig::default())).unwrap();
        let (value, _) = oracle::fair_minimax(&data, eta);
        assert!((fit.objective - value).abs() <= 1e-6, "case {case}: {} vs {value}", fit.objective);
        let direct = oracle::fair_objective_direct(&data, &fit.weights.beta, eta);
        assert!((fit.objective - direct).abs() <= 1e-9);
    }
}

#[test]
fn zero_radius_collapses_to_the_empirical_fits() {
    let mut rng = oracle::rng(23);
    for case in 0..10 {
        let n = rng.random_range(10..=40);
        let p = rng.random_range(1..=3);
        let data = oracle::random_dataset(&mut rng, n, p, 1.5);
        let kappa = if case % 2 == 0 { f64::INFINITY } else { 0.5 };

        let lr = fit_lr(&data, &TrainConfig::default()).unwrap();
        let dr0 = fit_drflr(&data, &TrainConfig::new(0.0, ambiguity(0.0, kappa))).unwrap();
        assert!(max_abs_diff(&lr.weights.beta, &dr0.weights.beta) <= 1e-4, "case {case}");
        assert!((lr.objective - dr0.objective).abs() <= 1e-6, "case {case}: {} vs {}", lr.objective, dr0.objective);

        let eta = half_bound(&data);
        let flr = fit_flr(&data, &TrainConfig::new(eta, AmbiguityConfig::default())).unwrap();
        let dr = fit_drflr(&data, &TrainConfig::new(eta, ambiguity(0.0, kappa))).unwrap();
        assert!(max_abs_diff(&flr.weights.beta, &dr.weights.beta) <= 1e-4, "case {case}");
        assert!((flr.objective - dr.objective).abs() <= 1e-6, "case {case}: {} vs {}", flr.objective, dr.objective);
    }
}

/// Positives deep in the linear part of the loss, so the worst case is
/// attained by a short move that fits inside the brute-force grid.
fn saturated_fixture() -> Dataset {
    Dataset::new(
        vec![vec![-5.0], vec![-4.5], vec![1.0], vec![0.5]],
        vec![0, 1, 0, 1],
        vec![1, 1, 0, 0],
    )
    .unwrap()
}

#[test]
fn worst_case_matches_the_brute_force_sup() {
    let data = saturated_fixture();
    let beta = ModelWeights::new(vec![2.0]).unwrap();
    let eta = 0.2;
    for (kappa, rho) in [(f64::INFINITY, 0.05), (f64::INFINITY, 0.02), (0.5, 0.05), (1.0, 0.1)] {
        let wc = worst_case_objective(&data, &beta, eta, &ambiguity(rho, kappa)).unwrap();
        let brute = [(1, 0), (0, 1)]
            .map(|br| oracle::robust_branch_primal(&data, 2.0, eta, br, kappa, kappa, rho))
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(brute <= wc + 1e-9, "kappa {kappa} rho {rho}: brute {brute} exceeds {wc}");
        assert!((wc - brute).abs() <= 1e-4, "kappa {kappa} rho {rho}: {wc} vs {brute}");
    }
}

#[test]
fn worst_case_dominates_and_grows_with_the_radius() {
    let mut rng = oracle::rng(24);
    for case in 0..10 {
        let n = rng.random_range(6..=30);
        let p = rng.random_range(1..=3);
        let data = oracle::random_dataset(&mut rng, n, p, 1.5);
        let beta = ModelWeights::new((0..p).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let eta = half_bound(&data);
        let kappa = [0.5, 2.0, f64::INFINITY][case % 3];
        let base = fair_objective(&data, &beta, eta).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..10 {
            let v = worst_case_objective(&data, &beta, eta, &ambiguity(0.01 * k as f64, kappa)).unwrap();
            assert!(v >= prev - 1e-9, "case {case}: {prev} -> {v}");
            assert!(v >= base - 1e-9);
            if k == 0 {
                assert!((v - base).abs() <= 1e-8);
            }
            prev = v;
        }
    }
}

#[test]
fn robust_multipliers_respect_the_norm_constraints() {
    let mut rng = oracle::rng(25);
    for case in 0..6 {
        let data = oracle::random_dataset(&mut rng, 16, 2, 1.5);
        let eta = half_bound(&data);
        let fit = fit_drflr(&data, &TrainConfig::new(eta, ambiguity(0.05, 0.5))).unwrap();
        let duals = fit.duals.unwrap();
        let stats = data.marginal_stats();
        let dual_norm = Norm::L2.dual_eval(&fit.weights.beta);
        for (d, a2) in [(&duals.branch_10, 0u8), (&duals.branch_01, 1u8)] {
            let floor = (1.0 + eta * stats.r(a2).unwrap()) * dual_norm;
            assert!(d.lambda >= floor * (1.0 - 1e-9) - 1e-12, "case {case}: {} < {floor}", d.lambda);
            // Implied weaker constraints.
            assert!(d.lambda >= dual_norm * (1.0 - 1e-9));
        }
        let wc = worst_case_objective(&data, &fit.weights, eta, &ambiguity(0.05, 0.5)).unwrap();
        assert!((wc - fit.objective).abs() <= 1e-6, "case {case}: {wc} vs {}", fit.objective);
    }
}

#[test]
fn robust_fit_does_not_beat_its_own_evaluation_elsewhere() {
    // The fitted weights minimise the worst case, so perturbing them cannot help.
    let mut rng = oracle::rng(26);
    let data = oracle::random_dataset(&mut rng, 20, 2, 1.5);
    let eta = half_bound(&data);
    let amb = ambiguity(0.05, 0.5);
    let fit = fit_drflr(&data, &TrainConfig::new(eta, amb)).unwrap();
    for _ in 0..20 {
        let probe: Vec<f64> = fit.weights.beta.iter().map(|b| b + rng.random_range(-0.1..0.1)).collect();
        let v = worst_case_objective(&data, &ModelWeights::new(probe).unwrap(), eta, &amb).unwrap();
        assert!(v >= fit.objective - 1e-6, "{v} < {}", fit.objective);
    }
}

#[test]
fn unfairness_falls_as_the_penalty_grows() {
    let mut rng = oracle::rng(27);
    for _ in 0..3 {
        let data = oracle::random_dataset(&mut rng, 40, 2, 2.0);
        let bound = data.marginal_stats().max_eta();
        let mut prev = f64::INFINITY;
        for k in 0..=6 {
            let eta = bound * k as f64 / 6.0;
            let fit = fit_flr(&data, &TrainConfig::new(eta, AmbiguityConfig::default())).unwrap();
            let u = empirical_unfairness(&data, &fit.weights, UnfairnessKind::LogProbabilistic).unwrap();
            assert!(u <= prev + 1e-3, "eta {eta}: {prev} -> {u}");
            prev = u;
        }
    }
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / scale.max(1e-8)
}

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[j] += h;
            down[j] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn loss_and_score_gradients_match_finite_differences() {
    let mut rng = oracle::rng(28);
    for _ in 0..100 {
        let p = rng.random_range(1..=4);
        let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = rng.random_range(0..2u8);
        let w = ModelWeights::new(beta.clone()).unwrap();

        let g = log_loss_gradient(&w, &x, y).unwrap();
        let fd = central_difference(|b| log_loss(&ModelWeights::new(b.to_vec()).unwrap(), &x, y).unwrap(), &beta, 1e-6);
        assert!(relative_error(&g, &fd) <= 1e-5, "loss: {g:?} vs {fd:?}");

        let g = log_score_gradient(&w, &x).unwrap();
        let fd = central_difference(|b| log_score(&ModelWeights::new(b.to_vec()).unwrap(), &x).unwrap(), &beta, 1e-6);
        assert!(relative_error(&g, &fd) <= 1e-5, "score: {g:?} vs {fd:?}");
    }
}

#[test]
fn eliminated_objective_gradient_matches_finite_differences() {
    let mut rng = oracle::rng(29);
    let mut checked = 0;
    while checked < 100 {
        let n = rng.random_range(4..=12);
        let p = rng.random_range(1..=3);
        let data = oracle::random_dataset(&mut rng, n, p, 1.5);
        let eta = rng.random_range(0.0..1.0) * data.marginal_stats().max_eta();
        let amb = ambiguity(rng.random_range(0.01..0.3), rng.random_range(0.2..2.0));
        let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let floor = 2.0 * Norm::L2.dual_eval(&beta);
        let point = RobustPoint {
            beta,
            lambda: [floor + rng.random_range(0.1..2.0), floor + rng.random_range(0.1..2.0)],
            mu: [[(); 4].map(|_| rng.random_range(-1.0..1.0)), [(); 4].map(|_| rng.random_range(-1.0..1.0))],
        };
        let x = point.to_vec();
        let f = |v: &[f64]| eliminated_objective(&data, eta, &amb, &RobustPoint::from_slice(v)).unwrap().0;
        let (_, g) = eliminated_objective(&data, eta, &amb, &point).unwrap();
        // The objective is piecewise smooth; a kink inside the stencil shows
        // up as a one-sided difference that disagrees with the other side.
        let h = 1e-6;
        let kinked = (0..x.len()).any(|j| {
            let mut up = x.clone();
            let mut down = x.clone();
            up[j] += h;
            down[j] -= h;
            let f0 = f(&x);
            let fwd = (f(&up) - f0) / h;
            let bwd = (f0 - f(&down)) / h;
            (fwd - bwd).abs() > 1e-3 * (1.0 + fwd.abs())
        });
        if kinked {
            continue;
        }
        let fd = central_difference(f, &x, h);
        assert!(relative_error(&g, &fd) <= 1e-5, "{g:?} vs {fd:?}");
        checked += 1;
    }
}
