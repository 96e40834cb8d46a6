//! Report files and the run manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::BenchReport;
use crate::frontier::FrontierEntry;
use crate::metrics::Metrics;
use crate::svg::{Mark, Plot, Series};
use crate::ExperimentError;

pub const MANIFEST: &str = "manifest.json";

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Everything needed to rerun a command: its name, the fully resolved
/// configuration, the seeds and the files it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: &impl Serialize, seeds: Vec<u64>) -> Result<Self, ExperimentError> {
        Ok(Self {
            tool: "fairdro".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: serde_json::to_value(config)?,
            seeds,
            files: Vec::new(),
        })
    }

    /// Writes `manifest.json` into `dir`, listing `files` plus itself.
    pub fn write(self, dir: &Path, files: &[String]) -> Result<(), ExperimentError> {
        self.write_to(&dir.join(MANIFEST), files)
    }

    /// Writes the manifest at `path`, listing `files` plus itself.
    pub fn write_to(mut self, path: &Path, files: &[String]) -> Result<(), ExperimentError> {
        self.files = files.to_vec();
        if let Some(name) = path.file_name() {
            self.files.push(name.to_string_lossy().into_owned());
        }
        write_json(path, &self)
    }
}

#[derive(Serialize)]
struct BenchRow<'a> {
    dataset: &'a str,
    method: &'a str,
    count: usize,
    failures: usize,
    accuracy_mean: f64,
    accuracy_std: f64,
    det_unf_mean: f64,
    det_unf_std: f64,
    prob_unf_mean: f64,
    prob_unf_std: f64,
    log_prob_unf_mean: f64,
    log_prob_unf_std: f64,
    log_loss_mean: f64,
    log_loss_std: f64,
}

fn bench_row<'a>(dataset: &'a str, method: &'a str, count: usize, failures: usize, mean: &Metrics, std: &Metrics) -> BenchRow<'a> {
    BenchRow {
        dataset,
        method,
        count,
        failures,
        accuracy_mean: mean.accuracy,
        accuracy_std: std.accuracy,
        det_unf_mean: mean.det_unf,
        det_unf_std: std.det_unf,
        prob_unf_mean: mean.prob_unf,
        prob_unf_std: std.prob_unf,
        log_prob_unf_mean: mean.log_prob_unf,
        log_prob_unf_std: std.log_prob_unf,
        log_loss_mean: mean.log_loss,
        log_loss_std: std.log_loss,
    }
}

/// Writes `report.json`, `metrics.csv` and, when enabled, `frontier.svg`.
/// Returns the file names written.
pub fn write_bench_outputs(report: &BenchReport, dir: &Path) -> Result<Vec<String>, ExperimentError> {
    fs::create_dir_all(dir)?;
    let mut files = vec!["report.json".to_string(), "metrics.csv".to_string()];
    write_json(&dir.join("report.json"), report)?;

    let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
    let nan = Metrics::from_values([f64::NAN; 5]);
    for d in &report.datasets {
        for m in &d.methods {
            let (mean, std, count) = m.summary.map_or((nan, nan, 0), |s| (s.mean, s.std, s.count));
            w.serialize(bench_row(&d.name, m.method.as_str(), count, m.failures, &mean, &std))?;
        }
    }
    w.flush()?;

    if report.config.protocol.svg {
        let mut plot = Plot::new("Test accuracy against deterministic unfairness", "Det-UNF", "accuracy");
        for d in &report.datasets {
            for m in &d.methods {
                if let Some(s) = m.summary {
                    let mut series = Series::new(
                        format!("{} {}", d.name, m.method.as_str()),
                        vec![(s.mean.det_unf, s.mean.accuracy)],
                        Mark::Points,
                    );
                    series.errors = Some(vec![(s.std.det_unf, s.std.accuracy)]);
                    plot.series.push(series);
                }
            }
        }
        fs::write(dir.join("frontier.svg"), plot.render())?;
        files.push("frontier.svg".into());
    }
    Ok(files)
}

#[derive(Serialize)]
struct FrontierRow<'a> {
    label: &'a str,
    eta: f64,
    train_loss: Option<f64>,
    train_unfairness: Option<f64>,
    test_loss: Option<f64>,
    test_unfairness: Option<f64>,
    accuracy: Option<f64>,
    true_loss: Option<f64>,
    true_unfairness: Option<f64>,
    error: Option<&'a str>,
}

/// Writes one CSV row per grid point of each labelled sweep.
pub fn write_frontier_csv(path: &Path, sweeps: &[(String, Vec<FrontierEntry>)]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    for (label, entries) in sweeps {
        for e in entries {
            let p = e.point;
            w.serialize(FrontierRow {
                label,
                eta: e.eta,
                train_loss: p.map(|p| p.train_loss),
                train_unfairness: p.map(|p| p.train_unfairness),
                test_loss: p.map(|p| p.test_loss),
                test_unfairness: p.map(|p| p.test_unfairness),
                accuracy: p.map(|p| p.accuracy),
                true_loss: p.and_then(|p| p.true_loss),
                true_unfairness: p.and_then(|p| p.true_unfairness),
                error: e.error.as_deref(),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Estimated (train), actual (test) and, when present, true frontiers.
pub fn frontier_plot(sweeps: &[(String, Vec<FrontierEntry>)]) -> Plot {
    let mut plot = Plot::new("Pareto frontiers", "log-probabilistic unfairness", "log-loss");
    for (label, entries) in sweeps {
        let pts: Vec<_> = entries.iter().filter_map(|e| e.point).collect();
        plot.series.push(Series::new(
            format!("{label} estimated"),
            pts.iter().map(|p| (p.train_unfairness, p.train_loss)).collect(),
            Mark::Line,
        ));
        plot.series.push(Series::new(
            format!("{label} actual"),
            pts.iter().map(|p| (p.test_unfairness, p.test_loss)).collect(),
            Mark::Line,
        ));
        let truth: Vec<(f64, f64)> = pts.iter().filter_map(|p| Some((p.true_unfairness?, p.true_loss?))).collect();
        if !truth.is_empty() {
            plot.series.push(Series::new(format!("{label} true"), truth, Mark::Line));
        }
    }
    plot
}
