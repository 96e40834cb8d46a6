//! Synthetic scenarios, evaluation protocols and the benchmark harness.
//!
//! Repetition loops run on the rayon pool. Every repetition derives its own
//! seed from the configured base seed, so results do not depend on the
//! number of threads or the order in which repetitions finish.

use thiserror::Error;

pub mod bench;
pub mod cv;
pub mod frontier;
pub mod generators;
pub mod metrics;
pub mod output;
pub mod split;
pub mod svg;

pub use bench::{run_benchmark, run_benchmark_config, BenchConfig, BenchReport};
pub use cv::{cross_validate_rho, CvOutcome, CvProtocol};
pub use frontier::{frontier_gap, pareto_frontier, FrontierEntry, FrontierPoint};
pub use generators::{generate_boundary_demo, generate_frontier_demo, generate_two_moons};
pub use metrics::{evaluate, Metrics, Summary};
pub use split::{stratified_sample, stratified_split};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Data(#[from] fairdro_core::DataError),
    #[error(transparent)]
    Train(#[from] fairdro_core::TrainError),
    #[error(transparent)]
    Unfairness(#[from] fairdro_core::UnfairnessError),
    #[error(transparent)]
    Model(#[from] fairdro_core::ModelError),
    #[error(transparent)]
    Metric(#[from] fairdro_core::MetricError),
    #[error("cannot parse configuration: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
