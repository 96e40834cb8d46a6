//! Benchmark harness driven by a TOML file.
//!
//! ```toml
//! [dataset]            # or [[dataset]] repeated
//! source = "boundary"  # "boundary", "frontier", "moons" or "csv"
//! seed = 7
//!
//! [method]
//! methods = ["lr", "flr", "drflr"]
//! eta = 0.1            # or "half": min(p_11, p_01) / 2 of each training sample
//! rho = 0.05           # or "cv"
//! kappa_a = 0.5        # or "inf"
//! kappa_y = 0.5
//!
//! [protocol]
//! n_train = 25
//! k2 = 50
//! ```
//!
//! Every repetition draws a stratified training sample of `n_train` points
//! and evaluates each method on the test set: the held-out part of an outer
//! stratified split when `train_fraction` is set, the dataset's `test_path`
//! when given, and otherwise everything not drawn for training.
//!
//! With `resample = true` a synthetic source draws a fresh population for
//! every repetition, so results average over datasets as well as samples.

use std::path::{Path, PathBuf};

use fairdro_core::{
    fit, AmbiguityConfig, Dataset, GroundMetric, Method, Norm, TrainConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::{cross_validate_rho, derive_seed, log_grid, CvOutcome, CvProtocol};
use crate::generators::{
    generate_boundary_demo, generate_frontier_demo, generate_two_moons, BOUNDARY_MAJOR, BOUNDARY_MINOR,
};
use crate::metrics::{evaluate, summarize, Metrics, Summary};
use crate::split::{stratified_sample, stratified_split};
use crate::ExperimentError;

const STREAM_OUTER: u64 = 10;
const STREAM_SAMPLE: u64 = 11;
const STREAM_CV: u64 = 12;
const STREAM_DATA: u64 = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_path: Option<PathBuf>,
    },
    Boundary {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_major")]
        n_major: usize,
        #[serde(default = "default_minor")]
        n_minor: usize,
    },
    Frontier {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_frontier_n")]
        n: usize,
    },
    Moons {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_frontier_n")]
        n: usize,
        #[serde(default = "default_noise")]
        noise: f64,
    },
}

fn default_major() -> usize {
    BOUNDARY_MAJOR
}
fn default_minor() -> usize {
    BOUNDARY_MINOR
}
fn default_frontier_n() -> usize {
    400
}
fn default_noise() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub source: DataSource,
    /// Append a constant feature.
    #[serde(default = "default_true")]
    pub intercept: bool,
    /// Standardise features with training-set statistics.
    #[serde(default)]
    pub standardize: bool,
    /// Redraw a synthetic population for every repetition.
    #[serde(default)]
    pub resample: bool,
}

impl DatasetSpec {
    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.source {
            DataSource::Csv { path, .. } => path.display().to_string(),
            DataSource::Boundary { .. } => "boundary".into(),
            DataSource::Frontier { .. } => "frontier".into(),
            DataSource::Moons { .. } => "moons".into(),
        }
    }

    /// Loads `(data, separate test set)`; relative paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<(Dataset, Option<Dataset>), ExperimentError> {
        Ok(match &self.source {
            DataSource::Csv { path, test_path } => {
                let data = Dataset::from_csv_path(base.join(path))?;
                let test = test_path.as_ref().map(|p| Dataset::from_csv_path(base.join(p))).transpose()?;
                (data, test)
            }
            DataSource::Boundary { seed, n_major, n_minor } => {
                if *n_major == 0 || *n_minor == 0 {
                    return Err(ExperimentError::Config("group sizes must be positive".into()));
                }
                (generate_boundary_demo(*seed, *n_major, *n_minor), None)
            }
            DataSource::Frontier { seed, n } => {
                if *n == 0 {
                    return Err(ExperimentError::Config("sample size must be positive".into()));
                }
                (generate_frontier_demo(*seed, *n), None)
            }
            DataSource::Moons { seed, n, noise } => {
                if *n == 0 || !(*noise >= 0.0 && noise.is_finite()) {
                    return Err(ExperimentError::Config("moons need n >= 1 and a nonnegative noise".into()));
                }
                (generate_two_moons(*seed, *n, *noise), None)
            }
        })
    }

    /// The same source with its generator seed replaced; `None` for files.
    fn reseeded(&self, seed: u64) -> Option<DatasetSpec> {
        let source = match &self.source {
            DataSource::Csv { .. } => return None,
            DataSource::Boundary { n_major, n_minor, .. } => DataSource::Boundary {
                seed,
                n_major: *n_major,
                n_minor: *n_minor,
            },
            DataSource::Frontier { n, .. } => DataSource::Frontier { seed, n: *n },
            DataSource::Moons { n, noise, .. } => DataSource::Moons {
                seed,
                n: *n,
                noise: *noise,
            },
        };
        Some(DatasetSpec {
            source,
            ..self.clone()
        })
    }

    fn base_seed(&self) -> u64 {
        match &self.source {
            DataSource::Csv { .. } => 0,
            DataSource::Boundary { seed, .. } | DataSource::Frontier { seed, .. } | DataSource::Moons { seed, .. } => *seed,
        }
    }

    /// Loads, optionally splits, and prepares a synthetic population.
    fn fresh_split(&self, base: &Path, fraction: Option<f64>, seed: u64) -> Result<(Dataset, Option<Dataset>), ExperimentError> {
        let (data, _) = self.load(base)?;
        let (pool, test) = match fraction {
            Some(f) => {
                let (a, b) = stratified_split(&data, f, seed)?;
                (a, Some(b))
            }
            None => (data, None),
        };
        let (pool, tests) = self.prepare(&pool, &test.iter().collect::<Vec<_>>());
        Ok((pool, tests.into_iter().next()))
    }

    /// Applies standardisation (fitted on `train`) and the intercept.
    pub fn prepare(&self, train: &Dataset, others: &[&Dataset]) -> (Dataset, Vec<Dataset>) {
        let st = self.standardize.then(|| train.fit_standardization());
        let go = |d: &Dataset| {
            let d = match &st {
                Some(s) => d.standardized(s),
                None => d.clone(),
            };
            if self.intercept {
                d.with_intercept()
            } else {
                d
            }
        };
        (go(train), others.iter().map(|d| go(d)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumberOr {
    Number(f64),
    Word(String),
}

/// Penalty weight: a constant, or half the admissible bound of each training sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaRule {
    Fixed(f64),
    HalfBound,
}

impl EtaRule {
    pub fn resolve(self, train: &Dataset) -> f64 {
        match self {
            EtaRule::Fixed(v) => v,
            EtaRule::HalfBound => train.marginal_stats().max_eta() / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoRule {
    Fixed(f64),
    CrossValidated,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Lr, Method::Flr, Method::Drflr]
}
fn default_eta() -> NumberOr {
    NumberOr::Word("half".into())
}
fn default_rho() -> NumberOr {
    NumberOr::Word("cv".into())
}
fn default_kappa() -> f64 {
    0.5
}
fn default_tau() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_eta")]
    pub eta: NumberOr,
    #[serde(default = "default_rho")]
    pub rho: NumberOr,
    #[serde(default = "default_kappa", with = "fairdro_core::metric::kappa_serde")]
    pub kappa_a: f64,
    #[serde(default = "default_kappa", with = "fairdro_core::metric::kappa_serde")]
    pub kappa_y: f64,
    #[serde(default)]
    pub norm: Norm,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

impl Default for MethodSpec {
    fn default() -> Self {
        Self {
            methods: default_methods(),
            eta: default_eta(),
            rho: default_rho(),
            kappa_a: default_kappa(),
            kappa_y: default_kappa(),
            norm: Norm::L2,
            tau: default_tau(),
        }
    }
}

impl MethodSpec {
    pub fn eta_rule(&self) -> Result<EtaRule, ExperimentError> {
        match &self.eta {
            NumberOr::Number(v) if *v >= 0.0 && v.is_finite() => Ok(EtaRule::Fixed(*v)),
            NumberOr::Word(w) if w.eq_ignore_ascii_case("half") => Ok(EtaRule::HalfBound),
            other => Err(ExperimentError::Config(format!("eta must be a nonnegative number or \"half\", got {other:?}"))),
        }
    }

    pub fn rho_rule(&self) -> Result<RhoRule, ExperimentError> {
        match &self.rho {
            NumberOr::Number(v) if *v >= 0.0 && v.is_finite() => Ok(RhoRule::Fixed(*v)),
            NumberOr::Word(w) if w.eq_ignore_ascii_case("cv") => Ok(RhoRule::CrossValidated),
            other => Err(ExperimentError::Config(format!("rho must be a nonnegative number or \"cv\", got {other:?}"))),
        }
    }

    pub fn metric(&self) -> Result<GroundMetric, ExperimentError> {
        Ok(GroundMetric::new(self.norm, self.kappa_a, self.kappa_y)?)
    }
}

fn default_n_train() -> usize {
    150
}
fn default_k1() -> usize {
    3
}
fn default_k2() -> usize {
    100
}
fn default_one() -> usize {
    1
}
fn default_grid_points() -> usize {
    50
}
fn default_grid_min() -> f64 {
    5e-5
}
fn default_grid_max() -> f64 {
    5e-1
}
fn default_threshold() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_k1")]
    pub k1: usize,
    #[serde(default = "default_k2")]
    pub k2: usize,
    #[serde(default = "default_one")]
    pub k3: usize,
    /// Outer stratified train share; absent means "test on the rest".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_fraction: Option<f64>,
    /// Sub-train size for radius validation; defaults to `n_train`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv_n: Option<usize>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_grid_min")]
    pub grid_min: f64,
    #[serde(default = "default_grid_max")]
    pub grid_max: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub seed: u64,
    /// Write a scatter plot next to the report.
    #[serde(default = "default_true")]
    pub svg: bool,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        toml::from_str("").expect("every protocol field has a default")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(DatasetSpec),
    Many(Vec<DatasetSpec>),
}

fn one_or_many<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<DatasetSpec>, D::Error> {
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(deserialize_with = "one_or_many")]
    pub dataset: Vec<DatasetSpec>,
    #[serde(default)]
    pub method: MethodSpec,
    #[serde(default)]
    pub protocol: ProtocolSpec,
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: BenchConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.method.eta_rule()?;
        self.method.rho_rule()?;
        self.method.metric()?;
        if self.method.methods.is_empty() {
            return Err(ExperimentError::Config("no methods selected".into()));
        }
        if !(self.method.tau > 0.0 && self.method.tau < 1.0) {
            return Err(ExperimentError::Config(format!("tau {} is outside (0, 1)", self.method.tau)));
        }
        if let Some(d) = self.dataset.iter().find(|d| d.resample && d.reseeded(0).is_none()) {
            return Err(ExperimentError::Config(format!("{}: only synthetic sources can be resampled", d.label())));
        }
        let p = &self.protocol;
        if p.k1 == 0 || p.k2 == 0 || p.k3 == 0 {
            return Err(ExperimentError::Config("repetition counts must be at least 1".into()));
        }
        if let Some(f) = p.train_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(ExperimentError::Config(format!("train_fraction {f} is outside (0, 1)")));
            }
        }
        if p.grid_points == 0 || !(p.grid_min > 0.0 && p.grid_max >= p.grid_min) {
            return Err(ExperimentError::Config("rho grid needs grid_points >= 1 and 0 < grid_min <= grid_max".into()));
        }
        Ok(())
    }

    fn cv_protocol(&self, seed: u64) -> CvProtocol {
        let p = &self.protocol;
        CvProtocol {
            grid: log_grid(p.grid_min, p.grid_max, p.grid_points),
            threshold: p.threshold,
            k1: p.k1,
            k2: p.k2,
            k3: p.k3,
            n: p.cv_n.unwrap_or(p.n_train),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub summary: Option<Summary>,
    /// Repetitions whose fit or evaluation failed.
    pub failures: usize,
    /// Fits that stopped before reaching the solver tolerance.
    pub nonconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Radius per outer split (validated or fixed).
    pub rho: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cv: Vec<CvOutcome>,
    pub methods: Vec<MethodReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub datasets: Vec<DatasetReport>,
}

/// Per method: the test metrics and whether the fit converged, or why it failed.
type RunOutcomes = Vec<Result<(Metrics, bool), String>>;

/// Runs every method on one training sample.
fn run_once(
    cfg: &BenchConfig,
    train: &Dataset,
    test: &Dataset,
    rho: f64,
) -> Result<RunOutcomes, ExperimentError> {
    let eta = cfg.method.eta_rule()?.resolve(train);
    let amb = AmbiguityConfig::new(rho, cfg.method.metric()?)?;
    Ok(cfg
        .method
        .methods
        .iter()
        .map(|&m| {
            let fitted = fit(m, train, &TrainConfig::new(eta, amb)).map_err(|e| e.to_string())?;
            let metrics = evaluate(test, &fitted.weights, cfg.method.tau).map_err(|e| e.to_string())?;
            Ok((metrics, fitted.diagnostics.converged))
        })
        .collect())
}

fn run_dataset(cfg: &BenchConfig, spec: &DatasetSpec, index: usize, base: &Path) -> Result<DatasetReport, ExperimentError> {
    let p = &cfg.protocol;
    let (data, fixed_test) = spec.load(base)?;
    let k3 = if fixed_test.is_some() { 1 } else { p.k3 };
    let seed = derive_seed(p.seed, index as u64, 0);
    let mut rhos = Vec::new();
    let mut cvs = Vec::new();
    let mut outcomes: Vec<Vec<Result<(Metrics, bool), String>>> = vec![Vec::new(); cfg.method.methods.len()];

    for outer in 0..k3 {
        let (pool, outer_test) = match (&fixed_test, p.train_fraction) {
            (Some(t), _) => (data.clone(), Some(t.clone())),
            (None, Some(f)) => {
                let (a, b) = stratified_split(&data, f, derive_seed(seed, STREAM_OUTER, outer as u64))?;
                (a, Some(b))
            }
            (None, None) => (data.clone(), None),
        };
        let (pool, tests) = spec.prepare(&pool, &outer_test.iter().collect::<Vec<_>>());
        let outer_test = tests.into_iter().next();

        let rho = match cfg.method.rho_rule()? {
            RhoRule::Fixed(r) => r,
            RhoRule::CrossValidated if cfg.method.methods.contains(&Method::Drflr) => {
                let eta = cfg.method.eta_rule()?.resolve(&pool);
                let tc = TrainConfig::new(eta, AmbiguityConfig::new(0.0, cfg.method.metric()?)?);
                let out = cross_validate_rho(&pool, &cfg.cv_protocol(derive_seed(seed, STREAM_CV, outer as u64)), &tc)?;
                let r = out.rho;
                cvs.push(out);
                r
            }
            RhoRule::CrossValidated => 0.0,
        };
        rhos.push(rho);

        let reps: Vec<Result<RunOutcomes, ExperimentError>> = (0..p.k2)
            .into_par_iter()
            .map(|k| {
                let s = derive_seed(seed, STREAM_SAMPLE + outer as u64, k as u64);
                let fresh = match spec.resample.then(|| spec.reseeded(derive_seed(spec.base_seed(), STREAM_DATA, k as u64))) {
                    Some(Some(fresh_spec)) => Some(fresh_spec.fresh_split(base, p.train_fraction, derive_seed(seed, STREAM_OUTER, outer as u64))?),
                    _ => None,
                };
                let (pool, outer_test) = match &fresh {
                    Some((pool, test)) => (pool, test.as_ref()),
                    None => (&pool, outer_test.as_ref()),
                };
                let (train, rest) = stratified_sample(pool, p.n_train, s)?;
                let test = outer_test.unwrap_or(&rest);
                run_once(cfg, &train, test, rho)
            })
            .collect();
        for rep in reps {
            for (slot, r) in outcomes.iter_mut().zip(rep?) {
                slot.push(r);
            }
        }
    }

    let methods = cfg
        .method
        .methods
        .iter()
        .zip(&outcomes)
        .map(|(&method, runs)| {
            let ok: Vec<Metrics> = runs.iter().filter_map(|r| r.as_ref().ok().map(|v| v.0)).collect();
            if let Some(Err(e)) = runs.iter().find(|r| r.is_err()) {
                log::warn!("{}: {} failed: {e}", spec.label(), method.as_str());
            }
            MethodReport {
                method,
                summary: summarize(&ok),
                failures: runs.len() - ok.len(),
                nonconverged: runs.iter().filter(|r| matches!(r, Ok((_, false)))).count(),
            }
        })
        .collect();
    Ok(DatasetReport {
        name: spec.label(),
        error: None,
        rho: rhos,
        cv: cvs,
        methods,
    })
}

/// Runs the benchmark; relative dataset paths resolve against `base`. A
/// dataset that cannot be loaded or split yields an error entry and the run
/// moves on.
pub fn run_benchmark_config(cfg: &BenchConfig, base: &Path) -> Result<BenchReport, ExperimentError> {
    cfg.validate()?;
    let datasets = cfg
        .dataset
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            run_dataset(cfg, spec, i, base).unwrap_or_else(|e| DatasetReport {
                name: spec.label(),
                error: Some(e.to_string()),
                rho: Vec::new(),
                cv: Vec::new(),
                methods: Vec::new(),
            })
        })
        .collect();
    Ok(BenchReport {
        config: cfg.clone(),
        datasets,
    })
}

/// Loads the TOML file at `path` and runs it.
pub fn run_benchmark(path: impl AsRef<Path>) -> Result<BenchReport, ExperimentError> {
    let path = path.as_ref();
    let cfg = BenchConfig::from_path(path)?;
    run_benchmark_config(&cfg, path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = BenchConfig::from_toml("[dataset]\nsource = \"frontier\"\nseed = 3\n").unwrap();
        assert_eq!(cfg.dataset.len(), 1);
        assert_eq!(cfg.method.methods, default_methods());
        assert_eq!(cfg.method.eta_rule().unwrap(), EtaRule::HalfBound);
        assert_eq!(cfg.method.rho_rule().unwrap(), RhoRule::CrossValidated);
        assert_eq!(cfg.protocol.k2, 100);
        assert_eq!(cfg.protocol.n_train, 150);
    }

    #[test]
    fn infinite_trust_weights_and_dataset_lists() {
        let text = r#"
            [[dataset]]
            source = "boundary"
            n_major = 50
            n_minor = 20
            [[dataset]]
            source = "csv"
            path = "missing.csv"
            [method]
            methods = ["drflr"]
            kappa_a = "inf"
            kappa_y = inf
            rho = 0.05
            eta = 0.1
        "#;
        let cfg = BenchConfig::from_toml(text).unwrap();
        assert_eq!(cfg.dataset.len(), 2);
        assert!(cfg.method.metric().unwrap().is_infinite());
        assert_eq!(cfg.method.rho_rule().unwrap(), RhoRule::Fixed(0.05));
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(BenchConfig::from_toml("[dataset]\nsource = \"frontier\"\n[method]\neta = \"lots\"\n").is_err());
        assert!(BenchConfig::from_toml("[dataset]\nsource = \"frontier\"\n[protocol]\nk2 = 0\n").is_err());
        assert!(BenchConfig::from_toml("[dataset]\nsource = \"nowhere\"\n").is_err());
        assert!(BenchConfig::from_toml("[dataset]\nsource = \"frontier\"\n[protocol]\nbogus = 1\n").is_err());
    }

    #[test]
    fn resampling_needs_a_synthetic_source() {
        assert!(BenchConfig::from_toml("[dataset]\nsource = \"csv\"\npath = \"x.csv\"\nresample = true\n").is_err());
        let text = "[dataset]\nsource = \"frontier\"\nn = 80\nresample = true\n[method]\nmethods = [\"lr\"]\neta = 0.0\nrho = 0.0\n[protocol]\nn_train = 20\nk2 = 3\n";
        let cfg = BenchConfig::from_toml(text).unwrap();
        let a = run_benchmark_config(&cfg, Path::new(".")).unwrap();
        let b = run_benchmark_config(&cfg, Path::new(".")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.datasets[0].methods[0].summary.as_ref().unwrap().count, 3);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = BenchConfig::from_toml("[dataset]\nsource = \"boundary\"\nseed = 4\n[method]\nkappa_a = \"inf\"\n").unwrap();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(BenchConfig::from_toml(&text).unwrap(), cfg);
    }
}
