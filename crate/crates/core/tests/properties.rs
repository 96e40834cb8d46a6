use fairdro_core::{
    empirical_unfairness, fair_objective, log_loss, log_score, sigmoid_score, wasserstein_distance_discrete,
    Dataset, GroundMetric, ModelWeights, Norm, UnfairnessKind, WeightedPoint,
};
use fairdro_core::training::mean_log_loss;
use proptest::prelude::*;

/// Rows, sensitive attributes and labels with both groups holding a positive.
fn dataset(max_n: usize, p: usize) -> impl Strategy<Value = Dataset> {
    (4..=max_n)
        .prop_flat_map(move |n| {
            (
                prop::collection::vec(prop::collection::vec(-3.0..3.0f64, p), n),
                prop::collection::vec(0..2u8, n),
                prop::collection::vec(0..2u8, n),
            )
        })
        .prop_map(|(rows, mut a, mut y)| {
            a[0] = 0;
            y[0] = 1;
            a[1] = 1;
            y[1] = 1;
            Dataset::new(rows, a, y).unwrap()
        })
}

fn weights(p: usize) -> impl Strategy<Value = ModelWeights> {
    prop::collection::vec(-3.0..3.0f64, p).prop_map(|b| ModelWeights::new(b).unwrap())
}

fn kinds() -> impl Strategy<Value = UnfairnessKind> {
    prop_oneof![
        (0.05..0.95f64).prop_map(|tau| UnfairnessKind::Deterministic { tau }),
        Just(UnfairnessKind::Probabilistic),
        Just(UnfairnessKind::LogProbabilistic),
    ]
}

fn norms() -> impl Strategy<Value = Norm> {
    prop_oneof![Just(Norm::L1), Just(Norm::L2), Just(Norm::Linf)]
}

fn points(n: usize, p: usize) -> impl Strategy<Value = Vec<WeightedPoint>> {
    prop::collection::vec((prop::collection::vec(-2.0..2.0f64, p), 0..2u8, 0..2u8, 0.1..1.0f64), 1..=n).prop_map(
        |pts| {
            let total: f64 = pts.iter().map(|p| p.3).sum();
            pts.into_iter()
                .map(|(x, a, y, w)| WeightedPoint::new(x, a, y, w / total))
                .collect()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unfairness_ignores_which_group_is_called_one(data in dataset(12, 2), beta in weights(2), kind in kinds()) {
        let swapped = Dataset::new(
            data.rows().map(<[f64]>::to_vec).collect(),
            data.sensitive().iter().map(|a| 1 - a).collect(),
            data.labels().to_vec(),
        ).unwrap();
        let u = empirical_unfairness(&data, &beta, kind).unwrap();
        let v = empirical_unfairness(&swapped, &beta, kind).unwrap();
        prop_assert!((u - v).abs() <= 1e-12);
        prop_assert!(u >= 0.0);
    }

    #[test]
    fn log_gap_is_the_gap_of_mean_log_scores(data in dataset(12, 2), beta in weights(2)) {
        // An additive constant in f cancels, so f = 1 + log z gives the same gap.
        let mut sum = [0.0; 2];
        let mut count = [0.0; 2];
        for i in 0..data.len() {
            if data.labels()[i] == 1 {
                let a = data.sensitive()[i] as usize;
                sum[a] += 1.0 + log_score(&beta, data.row(i)).unwrap();
                count[a] += 1.0;
            }
        }
        let direct = (sum[1] / count[1] - sum[0] / count[0]).abs();
        let u = empirical_unfairness(&data, &beta, UnfairnessKind::LogProbabilistic).unwrap();
        prop_assert!((u - direct).abs() <= 1e-10 * (1.0 + direct));
    }

    #[test]
    fn fair_objective_adds_the_weighted_log_gap(data in dataset(16, 2), beta in weights(2), frac in 0.0..1.0f64) {
        let eta = frac * data.marginal_stats().max_eta();
        let f = fair_objective(&data, &beta, eta).unwrap();
        let expected = mean_log_loss(&data, &beta).unwrap()
            + eta * empirical_unfairness(&data, &beta, UnfairnessKind::LogProbabilistic).unwrap();
        prop_assert!((f - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
    }

    #[test]
    fn log_loss_is_nonnegative_and_convex(
        b0 in prop::collection::vec(-5.0..5.0f64, 3),
        b1 in prop::collection::vec(-5.0..5.0f64, 3),
        x in prop::collection::vec(-5.0..5.0f64, 3),
        y in 0..2u8,
        t in 0.0..1.0f64,
    ) {
        let mid: Vec<f64> = b0.iter().zip(&b1).map(|(u, v)| t * u + (1.0 - t) * v).collect();
        let at = |b: &[f64]| log_loss(&ModelWeights::new(b.to_vec()).unwrap(), &x, y).unwrap();
        let (l0, l1, lm) = (at(&b0), at(&b1), at(&mid));
        prop_assert!(l0 >= 0.0 && l1 >= 0.0 && lm >= 0.0);
        prop_assert!(lm <= t * l0 + (1.0 - t) * l1 + 1e-12 * (1.0 + l0 + l1));
    }

    #[test]
    fn score_is_monotone_in_the_margin(x in prop::collection::vec(-5.0..5.0f64, 2), s in 0.0..3.0f64, b in -3.0..3.0f64) {
        // Scaling beta along x raises the margin x'beta.
        let base = ModelWeights::new(vec![b, 0.0]).unwrap();
        let dir: Vec<f64> = vec![b + s * x[0], s * x[1]];
        let higher = ModelWeights::new(dir).unwrap();
        let lo = sigmoid_score(&base, &x).unwrap();
        let hi = sigmoid_score(&higher, &x).unwrap();
        prop_assert!(hi >= lo);
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
    }

    #[test]
    fn wasserstein_is_a_metric_on_small_supports(
        p in points(3, 2),
        q in points(3, 2),
        r in points(3, 2),
        norm in norms(),
        kappa_a in 0.1..2.0f64,
        kappa_y in 0.1..2.0f64,
    ) {
        let metric = GroundMetric::new(norm, kappa_a, kappa_y).unwrap();
        let pq = wasserstein_distance_discrete(&p, &q, &metric).unwrap();
        let qp = wasserstein_distance_discrete(&q, &p, &metric).unwrap();
        let qr = wasserstein_distance_discrete(&q, &r, &metric).unwrap();
        let pr = wasserstein_distance_discrete(&p, &r, &metric).unwrap();
        let pp = wasserstein_distance_discrete(&p, &p, &metric).unwrap();
        prop_assert!(pq >= -1e-12);
        prop_assert!(pp.abs() <= 1e-12);
        prop_assert!((pq - qp).abs() <= 1e-9 * (1.0 + pq));
        prop_assert!(pr <= pq + qr + 1e-9 * (1.0 + pr));
    }
}
