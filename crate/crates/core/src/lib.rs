//! Fair logistic regression over marginal-preserving Wasserstein balls.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`]: samples with a binary sensitive attribute and label, CSV I/O,
//!   and the empirical `(A, Y)` marginal.
//! * [`metric`]: feature norms, the ground metric with attribute and label
//!   trust weights, and the ambiguity set description.
//! * [`model`]: the logistic hypothesis and its numerically stable log-loss.
//! * [`unfairness`]: equal-opportunity gaps under three score transforms.
//! * [`transport`]: exact optimal transport between finitely supported
//!   distributions.
//! * [`dual`]: the marginal-constrained dual shared by training and auditing.
//! * [`training`]: plain, fair and distributionally robust fair fits.
//! * [`quantify`]: worst- and best-case unfairness of a fixed classifier,
//!   extremal distributions and the fairness distance.

pub mod data;
pub mod dual;
pub mod metric;
pub mod model;
pub mod quantify;
pub mod training;
pub mod transport;
pub mod unfairness;

pub use data::{Cell, DataError, Dataset, MarginalStats, Standardization};
pub use metric::{AmbiguityConfig, GroundMetric, MetricError, Norm};
pub use model::{log_loss, log_loss_gradient, log_score, log_score_gradient, sigmoid_score, ModelError, ModelWeights};
pub use quantify::{
    audit, compute_v, compute_v_knapsack, extremal_distribution, fairness_distance, unfairness_interval, AuditError,
    AuditInstance, AuditReport, ExtremalDistribution, LinearRegions, RegionOracle, SegmentHeuristic,
    UnfairnessInterval,
};
pub use training::{
    eliminated_objective, fair_objective, fit, fit_drflr, fit_flr, fit_lr, worst_case_objective, DualVariables,
    FitResult, Method, RobustPoint, TrainConfig, TrainError,
};
pub use transport::{wasserstein_distance_discrete, WeightedPoint};
pub use unfairness::{empirical_unfairness, UnfairnessError, UnfairnessKind};
