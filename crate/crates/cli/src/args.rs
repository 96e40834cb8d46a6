use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fairdro_core::metric::parse_kappa;
use fairdro_core::{Method, Norm};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "fairdro", version, about = "Distributionally robust fair logistic regression and unfairness auditing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model on a CSV and write it as JSON.
    Train(TrainArgs),
    /// Bound the unfairness of a saved linear model over a Wasserstein ball.
    Audit(AuditArgs),
    /// Sweep the fairness penalty and write estimated and actual frontiers.
    Frontier(FrontierArgs),
    /// Write one of the synthetic scenarios as CSV.
    Synth(SynthArgs),
    /// Run a benchmark described by a TOML file.
    Bench(BenchArgs),
}

fn kappa(s: &str) -> Result<f64, String> {
    match parse_kappa(s) {
        Some(v) if v > 0.0 => Ok(v),
        _ => Err(format!("`{s}` is not a positive number or `inf`")),
    }
}

fn norm(s: &str) -> Result<Norm, String> {
    Norm::parse(s).ok_or_else(|| format!("`{s}` is not one of l1, l2, linf"))
}

fn method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| format!("`{s}` is not one of lr, flr, drflr"))
}

fn nonnegative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a nonnegative number")),
    }
}

fn threshold(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        _ => Err(format!("`{s}` is not strictly between 0 and 1")),
    }
}

/// Ground metric flags shared by the commands that build an ambiguity set.
#[derive(Debug, Clone, Args, Serialize)]
pub struct MetricArgs {
    /// Cost of flipping the sensitive attribute (`inf` forbids it).
    #[arg(long = "kappa-a", default_value = "0.5", value_parser = kappa)]
    #[serde(with = "fairdro_core::metric::kappa_serde")]
    pub kappa_a: f64,
    /// Cost of flipping the label (`inf` forbids it).
    #[arg(long = "kappa-y", default_value = "0.5", value_parser = kappa)]
    #[serde(with = "fairdro_core::metric::kappa_serde")]
    pub kappa_y: f64,
    /// Feature norm of the ground metric.
    #[arg(long, default_value = "l2", value_parser = norm)]
    pub norm: Norm,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "drflr", value_parser = method)]
    pub method: Method,
    /// Fairness penalty; ignored by `lr`.
    #[arg(long, default_value = "0", value_parser = nonnegative)]
    pub eta: f64,
    /// Wasserstein radius; only used by `drflr`.
    #[arg(long, default_value = "0", value_parser = nonnegative)]
    pub rho: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub metric: MetricArgs,
    /// Append a constant feature before fitting.
    #[arg(long)]
    pub intercept: bool,
    /// Cap on Newton steps.
    #[arg(long = "max-iters", default_value_t = 3_000)]
    pub max_iters: usize,
    /// Relative objective tolerance.
    #[arg(long, default_value = "1e-9", value_parser = nonnegative)]
    pub tol: f64,
    /// Model JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AuditArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Model JSON; only `beta` is required.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "0.5", value_parser = threshold)]
    pub tau: f64,
    /// A radius, or `sweep` for the log grid below.
    #[arg(long, default_value = "0")]
    pub rho: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub metric: MetricArgs,
    /// Also compute the smallest radius containing a fair distribution.
    #[arg(long = "rho-hat")]
    pub rho_hat: bool,
    /// Bisection tolerance for `--rho-hat`.
    #[arg(long = "rho-hat-tol", default_value = "1e-6", value_parser = nonnegative)]
    pub rho_hat_tol: f64,
    #[arg(long = "grid-points", default_value_t = 20)]
    pub grid_points: usize,
    #[arg(long = "grid-min", default_value = "1e-4", value_parser = nonnegative)]
    pub grid_min: f64,
    #[arg(long = "grid-max", default_value = "0.5", value_parser = nonnegative)]
    pub grid_max: f64,
    /// Report JSON to write; it is always printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Boundary,
    Frontier,
    Moons,
}

#[derive(Debug, Args, Serialize)]
pub struct FrontierArgs {
    /// Training pool CSV (alternative to `--scenario`).
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    pub data: Option<PathBuf>,
    /// Synthetic pool instead of a CSV.
    #[arg(long, value_enum)]
    pub scenario: Option<Scenario>,
    /// Held-out CSV; without it the points not drawn for training are used.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pool size of the frontier and moons scenarios.
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    /// Jitter of the moons scenario.
    #[arg(long, default_value = "0.1", value_parser = nonnegative)]
    pub noise: f64,
    /// Training sample size drawn from the pool when `--test` is absent.
    #[arg(long = "n-train", default_value_t = 100)]
    pub n_train: usize,
    /// Number of evenly spaced penalties up to the admissible bound.
    #[arg(long = "eta-points", default_value_t = 10)]
    pub eta_points: usize,
    /// Explicit penalties, overriding `--eta-points`.
    #[arg(long, value_delimiter = ',', value_parser = nonnegative)]
    pub eta: Vec<f64>,
    /// Radii to sweep; 0 gives the fair fit.
    #[arg(long, value_delimiter = ',', default_value = "0,0.01", value_parser = nonnegative)]
    pub rho: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub metric: MetricArgs,
    /// Do not append a constant feature.
    #[arg(long = "no-intercept")]
    pub no_intercept: bool,
    /// Size of a fresh synthetic population for the true frontier.
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample size of the frontier and moons scenarios.
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    /// Jitter of the moons scenario.
    #[arg(long, default_value = "0.1", value_parser = nonnegative)]
    pub noise: f64,
    /// Majority group size of the boundary scenario.
    #[arg(long = "n-major", default_value_t = fairdro_experiments::generators::BOUNDARY_MAJOR)]
    pub n_major: usize,
    /// Minority group size of the boundary scenario.
    #[arg(long = "n-minor", default_value_t = fairdro_experiments::generators::BOUNDARY_MINOR)]
    pub n_minor: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    /// TOML configuration, or a manifest written by an earlier bench run.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}
