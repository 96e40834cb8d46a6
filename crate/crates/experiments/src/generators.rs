//! Synthetic scenarios.
//!
//! Every generator draws from [`ChaCha8Rng`] seeded with `seed_from_u64`, a
//! portable counter-based stream, so a seed reproduces the same dataset on
//! every platform.

use fairdro_core::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Majority group size of the boundary demo.
pub const BOUNDARY_MAJOR: usize = 5000;
/// Minority group size of the boundary demo.
pub const BOUNDARY_MINOR: usize = 2000;

/// Bivariate normal sampled through the Cholesky factor of its covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian2 {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl Gaussian2 {
    pub const fn isotropic(mean: [f64; 2], var: f64) -> Self {
        Self {
            mean,
            cov: [[var, 0.0], [0.0, var]],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let l00 = self.cov[0][0].sqrt();
        let l10 = self.cov[1][0] / l00;
        let l11 = (self.cov[1][1] - l10 * l10).sqrt();
        let u: f64 = StandardNormal.sample(rng);
        let v: f64 = StandardNormal.sample(rng);
        [self.mean[0] + l00 * u, self.mean[1] + l10 * u + l11 * v]
    }

    pub fn pdf(&self, x: [f64; 2]) -> f64 {
        let [[a, b], [c, d]] = self.cov;
        let det = a * d - b * c;
        let (dx, dy) = (x[0] - self.mean[0], x[1] - self.mean[1]);
        let q = (d * dx * dx - (b + c) * dx * dy + a * dy * dy) / det;
        (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
    }
}

/// Class-conditional features of the boundary demo, indexed `[a][y]`.
pub const BOUNDARY_COMPONENTS: [[Gaussian2; 2]; 2] = [
    [
        Gaussian2::isotropic([-4.0, 0.0], 5.0),
        Gaussian2::isotropic([-2.0, 0.0], 5.0),
    ],
    [
        Gaussian2::isotropic([2.0, 0.0], 3.5),
        Gaussian2::isotropic([6.0, 0.0], 3.5),
    ],
];

/// Two groups whose features separate along the first coordinate, so the
/// sensitive attribute is almost readable from `x_1`. Labels are fair coin
/// flips within each group; `n_major` samples have `a = 1`.
pub fn generate_boundary_demo(seed: u64, n_major: usize, n_minor: usize) -> Dataset {
    assert!(n_major >= 1 && n_minor >= 1, "group sizes must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_major + n_minor;
    let mut rows = Vec::with_capacity(n);
    let mut sensitive = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (a, count) in [(1u8, n_major), (0u8, n_minor)] {
        for _ in 0..count {
            let y = u8::from(rng.random_bool(0.5));
            rows.push(BOUNDARY_COMPONENTS[a as usize][y as usize].sample(&mut rng).to_vec());
            sensitive.push(a);
            labels.push(y);
        }
    }
    Dataset::new(rows, sensitive, labels).expect("generated rows are well formed")
}

/// Class-conditional features of the frontier demo, indexed by `y`.
pub const FRONTIER_COMPONENTS: [Gaussian2; 2] = [
    Gaussian2 {
        mean: [-2.0, -2.0],
        cov: [[10.0, 1.0], [1.0, 3.0]],
    },
    Gaussian2 {
        mean: [2.0, 2.0],
        cov: [[5.0, 1.0], [1.0, 5.0]],
    },
];

/// Rotates `x` by `-pi/4`.
fn rotate(x: [f64; 2]) -> [f64; 2] {
    let c = std::f64::consts::FRAC_1_SQRT_2;
    [c * x[0] + c * x[1], -c * x[0] + c * x[1]]
}

/// Balanced labels with Gaussian features; `a = 1` with probability equal to
/// the posterior of `y = 1` at the rotated feature vector, which couples the
/// sensitive attribute to the label.
pub fn generate_frontier_demo(seed: u64, n: usize) -> Dataset {
    assert!(n >= 1, "sample size must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut sensitive = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = u8::from(rng.random_bool(0.5));
        let x = FRONTIER_COMPONENTS[y as usize].sample(&mut rng);
        let r = rotate(x);
        let (p1, p0) = (FRONTIER_COMPONENTS[1].pdf(r), FRONTIER_COMPONENTS[0].pdf(r));
        let prob = if p0 + p1 > 0.0 { p1 / (p0 + p1) } else { 0.5 };
        sensitive.push(u8::from(rng.random::<f64>() < prob));
        rows.push(x.to_vec());
        labels.push(y);
    }
    Dataset::new(rows, sensitive, labels).expect("generated rows are well formed")
}

/// Interleaved half circles with Gaussian jitter of scale `noise`; `y` is
/// the moon. The sensitive attribute leans on the first coordinate rather
/// than the label: `a = 1` with probability 0.75 right of `x_1 = 0.5` and
/// 0.25 left of it.
pub fn generate_two_moons(seed: u64, n: usize, noise: f64) -> Dataset {
    assert!(n >= 1, "sample size must be positive");
    assert!(noise >= 0.0 && noise.is_finite(), "noise must be a nonnegative number");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut sensitive = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = u8::from(rng.random_bool(0.5));
        let t = rng.random_range(0.0..std::f64::consts::PI);
        let (cx, cy) = if y == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
        let jx: f64 = rng.sample(StandardNormal);
        let jy: f64 = rng.sample(StandardNormal);
        let x = [cx + noise * jx, cy + noise * jy];
        let p = if x[0] > 0.5 { 0.75 } else { 0.25 };
        sensitive.push(u8::from(rng.random_bool(p)));
        rows.push(x.to_vec());
        labels.push(y);
    }
    Dataset::new(rows, sensitive, labels).expect("generated rows are well formed")
}
