//! One function per subcommand. Each validates its inputs before doing any
//! work and writes a manifest next to what it produced.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fairdro_core::training::Diagnostics;
use fairdro_core::{
    audit as run_audit, fairness_distance, fit, AmbiguityConfig, AuditInstance, AuditReport, Dataset, GroundMetric,
    Method, ModelWeights, Norm, TrainConfig,
};
use fairdro_experiments::cv::{derive_seed, log_grid};
use fairdro_experiments::frontier::eta_grid;
use fairdro_experiments::generators::{
    generate_boundary_demo, generate_frontier_demo, generate_two_moons, BOUNDARY_MAJOR, BOUNDARY_MINOR,
};
use fairdro_experiments::output::{frontier_plot, write_bench_outputs, write_frontier_csv, write_json, Manifest};
use fairdro_experiments::{frontier_gap, pareto_frontier, run_benchmark_config, stratified_sample, BenchConfig, FrontierEntry};
use serde::{Deserialize, Serialize};

use crate::args::{AuditArgs, BenchArgs, FrontierArgs, MetricArgs, Scenario, SynthArgs, TrainArgs};
use crate::error::CliError;

const STREAM_SPLIT: u64 = 1;
const STREAM_POPULATION: u64 = 2;

/// Settings a model was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub data: PathBuf,
    pub eta: f64,
    pub rho: f64,
    #[serde(with = "fairdro_core::metric::kappa_serde")]
    pub kappa_a: f64,
    #[serde(with = "fairdro_core::metric::kappa_serde")]
    pub kappa_y: f64,
    pub norm: Norm,
    /// A constant feature was appended; `beta` ends with its weight.
    pub intercept: bool,
}

/// Model file. Only `beta` is needed to audit a classifier trained elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub beta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn metric(m: &MetricArgs) -> Result<GroundMetric, CliError> {
    GroundMetric::new(m.norm, m.kappa_a, m.kappa_y).map_err(input)
}

fn load_csv(path: &Path) -> Result<Dataset, CliError> {
    Dataset::from_csv_path(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// `model.json` -> `model.manifest.json`.
fn manifest_beside(path: &Path) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "output".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.manifest.json"))
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => Ok(fs::create_dir_all(dir)?),
        _ => Ok(()),
    }
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let metric = metric(&a.metric)?;
    let ambiguity = AmbiguityConfig::new(a.rho, metric).map_err(input)?;
    let mut data = load_csv(&a.data)?;
    if a.intercept {
        data = data.with_intercept();
    }
    let cfg = TrainConfig {
        tol: a.tol,
        max_iters: a.max_iters,
        ..TrainConfig::new(a.eta, ambiguity)
    };
    let fitted = fit(a.method, &data, &cfg)?;
    let model = ModelFile {
        beta: fitted.weights.beta.clone(),
        method: Some(a.method),
        config: Some(ModelConfig {
            data: a.data.clone(),
            eta: a.eta,
            rho: a.rho,
            kappa_a: a.metric.kappa_a,
            kappa_y: a.metric.kappa_y,
            norm: a.metric.norm,
            intercept: a.intercept,
        }),
        diagnostics: Some(fitted.diagnostics.clone()),
    };
    ensure_parent(&a.out)?;
    write_json(&a.out, &model)?;
    Manifest::new("train", a, Vec::new())?.write_to(&manifest_beside(&a.out), &[file_name(&a.out)])?;
    println!("{}: objective {:.6}, {} Newton steps", a.method.as_str(), fitted.objective, fitted.diagnostics.iterations);
    if !fitted.diagnostics.converged {
        let why = if fitted.diagnostics.capped { "weights hit the norm cap" } else { "iteration limit reached" };
        return Err(CliError::NotConverged(format!(
            "solver did not converge ({why}, gap bound {:.2e}); model written to {}",
            fitted.diagnostics.final_tolerance,
            a.out.display()
        )));
    }
    Ok(())
}

/// One report, or one per radius of a sweep.
#[derive(Serialize)]
#[serde(untagged)]
enum AuditOutput {
    Single(AuditReport),
    Sweep(Vec<AuditReport>),
}

enum RhoChoice {
    Single(f64),
    Sweep,
}

fn rho_choice(s: &str) -> Result<RhoChoice, CliError> {
    if s.eq_ignore_ascii_case("sweep") {
        return Ok(RhoChoice::Sweep);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(RhoChoice::Single(v)),
        _ => Err(CliError::Input(format!("--rho `{s}` is not a nonnegative number or `sweep`"))),
    }
}

pub fn audit(a: &AuditArgs) -> Result<(), CliError> {
    let choice = rho_choice(&a.rho)?;
    if let RhoChoice::Sweep = choice {
        if a.grid_points == 0 || !(a.grid_min > 0.0 && a.grid_max >= a.grid_min) {
            return Err(CliError::Input("sweep needs --grid-points >= 1 and 0 < --grid-min <= --grid-max".into()));
        }
    }
    let metric = metric(&a.metric)?;
    let text = fs::read_to_string(&a.model).map_err(|e| CliError::Input(format!("{}: {e}", a.model.display())))?;
    let model: ModelFile =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", a.model.display())))?;
    let beta = ModelWeights::new(model.beta.clone()).map_err(input)?;
    let mut data = load_csv(&a.data)?;
    if model.config.as_ref().is_some_and(|c| c.intercept) {
        data = data.with_intercept();
    }
    let ambiguity = AmbiguityConfig::new(0.0, metric).map_err(input)?;
    let base = AuditInstance::linear(&data, &beta, a.tau, ambiguity)?;
    let tol = a.rho_hat.then_some(a.rho_hat_tol);

    let json = match choice {
        RhoChoice::Single(rho) => AuditOutput::Single(run_audit(&base.with_rho(rho), tol)?),
        RhoChoice::Sweep => {
            let rho_hat = tol.map(|t| fairness_distance(&base, t)).transpose()?;
            let reports = log_grid(a.grid_min, a.grid_max, a.grid_points)
                .into_iter()
                .map(|rho| {
                    let mut r = run_audit(&base.with_rho(rho), None)?;
                    r.rho_hat = rho_hat;
                    Ok(r)
                })
                .collect::<Result<Vec<AuditReport>, CliError>>()?;
            AuditOutput::Sweep(reports)
        }
    };
    // A closed pipe (say `| head`) is not an error worth reporting.
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&json)?);
    if let Some(out) = &a.out {
        ensure_parent(out)?;
        write_json(out, &json)?;
        Manifest::new("audit", a, Vec::new())?.write_to(&manifest_beside(out), &[file_name(out)])?;
    }
    Ok(())
}

fn synthetic(scenario: Scenario, seed: u64, n: usize, noise: f64) -> Result<Dataset, CliError> {
    match scenario {
        Scenario::Boundary => Ok(generate_boundary_demo(seed, BOUNDARY_MAJOR, BOUNDARY_MINOR)),
        _ if n < 8 => Err(CliError::Input(format!("--n {n} is too small for a synthetic scenario"))),
        Scenario::Frontier => Ok(generate_frontier_demo(seed, n)),
        Scenario::Moons => Ok(generate_two_moons(seed, n, noise)),
    }
}

pub fn frontier(a: &FrontierArgs) -> Result<(), CliError> {
    let metric = metric(&a.metric)?;
    let ambiguities = a
        .rho
        .iter()
        .map(|&r| AmbiguityConfig::new(r, metric).map_err(input))
        .collect::<Result<Vec<_>, _>>()?;
    if ambiguities.is_empty() {
        return Err(CliError::Input("--rho needs at least one radius".into()));
    }
    if a.eta.is_empty() && a.eta_points == 0 {
        return Err(CliError::Input("--eta-points must be at least 1".into()));
    }
    if a.population.is_some() && a.scenario.is_none() {
        return Err(CliError::Input("--population needs --scenario".into()));
    }
    let prepare = |d: Dataset| if a.no_intercept { d } else { d.with_intercept() };

    let pool = match (&a.data, a.scenario) {
        (Some(path), _) => load_csv(path)?,
        (None, Some(s)) => synthetic(s, a.seed, a.n, a.noise)?,
        (None, None) => return Err(CliError::Input("give --data or --scenario".into())),
    };
    let (train, test) = match &a.test {
        Some(path) => (prepare(pool), prepare(load_csv(path)?)),
        None => {
            let (train, rest) = stratified_sample(&pool, a.n_train, derive_seed(a.seed, STREAM_SPLIT, 0))?;
            (prepare(train), prepare(rest))
        }
    };
    let population = match (a.population, a.scenario) {
        (Some(n), Some(s)) => Some(prepare(synthetic(s, derive_seed(a.seed, STREAM_POPULATION, 0), n, a.noise)?)),
        _ => None,
    };

    let bound = train.marginal_stats().max_eta();
    let etas = if a.eta.is_empty() { eta_grid(&train, a.eta_points) } else { a.eta.clone() };
    if let Some(e) = etas.iter().find(|&&e| e > bound) {
        return Err(CliError::Input(format!(
            "eta = {e} exceeds the admissible bound min(p_11, p_01) = {bound} of the training sample"
        )));
    }

    let sweeps: Vec<(String, Vec<FrontierEntry>)> = ambiguities
        .iter()
        .map(|amb| (format!("rho={}", amb.rho), pareto_frontier(&train, &test, &etas, amb, population.as_ref())))
        .collect();

    fs::create_dir_all(&a.out)?;
    write_frontier_csv(&a.out.join("frontier.csv"), &sweeps)?;
    fs::write(a.out.join("frontier.svg"), frontier_plot(&sweeps).render())?;
    Manifest::new("frontier", a, vec![a.seed])?.write(&a.out, &["frontier.csv".into(), "frontier.svg".into()])?;

    for (label, entries) in &sweeps {
        match frontier_gap(entries) {
            Some(g) => println!("{label}: mean train/test log-loss gap {g:.4}"),
            None => println!("{label}: no successful fits"),
        }
    }
    let failed: Vec<String> = sweeps
        .iter()
        .flat_map(|(label, entries)| {
            entries.iter().filter_map(move |e| e.error.as_ref().map(|m| format!("{label} eta={}: {m}", e.eta)))
        })
        .collect();
    if !failed.is_empty() {
        return Err(CliError::NotConverged(format!("{} fits failed; first: {}", failed.len(), failed[0])));
    }
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let data = match a.scenario {
        Scenario::Boundary if a.n_major > 0 && a.n_minor > 0 => generate_boundary_demo(a.seed, a.n_major, a.n_minor),
        Scenario::Boundary => return Err(CliError::Input("--n-major and --n-minor must be positive".into())),
        other => synthetic(other, a.seed, a.n, a.noise)?,
    };
    fs::create_dir_all(&a.out)?;
    data.to_csv_path(a.out.join("data.csv"))?;
    Manifest::new("synth", a, vec![a.seed])?.write(&a.out, &["data.csv".into()])?;
    println!("wrote {} rows to {}", data.len(), a.out.join("data.csv").display());
    Ok(())
}

/// What a bench manifest records: the configuration and the directory its
/// relative paths resolve against.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct BenchRun {
    base: PathBuf,
    bench: BenchConfig,
}

fn load_bench(path: &Path) -> Result<BenchRun, CliError> {
    let read_err = |e: std::io::Error| CliError::Input(format!("{}: {e}", path.display()));
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(path).map_err(read_err)?)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if manifest.command != "bench" {
            return Err(CliError::Input(format!("{} is a `{}` manifest, not a bench one", path.display(), manifest.command)));
        }
        let run: BenchRun = serde_json::from_value(manifest.config)?;
        run.bench.validate()?;
        return Ok(run);
    }
    let bench = BenchConfig::from_path(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let base = parent.canonicalize().map_err(read_err)?;
    Ok(BenchRun { base, bench })
}

pub fn bench(a: &BenchArgs) -> Result<(), CliError> {
    let run = load_bench(&a.config)?;
    let report = run_benchmark_config(&run.bench, &run.base)?;
    let files = write_bench_outputs(&report, &a.out)?;
    Manifest::new("bench", &run, vec![run.bench.protocol.seed])?.write(&a.out, &files)?;

    let mut errors = Vec::new();
    let mut troubled = 0;
    for d in &report.datasets {
        if let Some(e) = &d.error {
            errors.push(format!("{}: {e}", d.name));
            continue;
        }
        for m in &d.methods {
            troubled += m.failures + m.nonconverged;
            match &m.summary {
                Some(s) => println!(
                    "{:<20} {:<6} acc {:.3}  det {:.3}  prob {:.3}  logprob {:.3}  (n={}, failed {}, unconverged {})",
                    d.name,
                    m.method.as_str(),
                    s.mean.accuracy,
                    s.mean.det_unf,
                    s.mean.prob_unf,
                    s.mean.log_prob_unf,
                    s.count,
                    m.failures,
                    m.nonconverged
                ),
                None => println!("{:<20} {:<6} every repetition failed", d.name, m.method.as_str()),
            }
        }
    }
    if !errors.is_empty() {
        return Err(CliError::Input(errors.join("; ")));
    }
    if troubled > 0 {
        return Err(CliError::NotConverged(format!("{troubled} fits failed or did not converge; see {}", a.out.join("report.json").display())));
    }
    Ok(())
}
