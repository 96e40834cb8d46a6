use fairdro_core::{AuditError, DataError, TrainError};
use fairdro_core::dual::DualError;
use fairdro_experiments::ExperimentError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, unreadable or invalid files.
    #[error("{0}")]
    Input(String),
    /// A solver stopped short; whatever could be written was written.
    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::NotConverged(_) => 2,
        }
    }
}

fn numerical(e: &DualError) -> bool {
    matches!(e, DualError::NotConverged | DualError::NonFinite(_) | DualError::NoPieces(_))
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match &e {
            TrainError::Dual(d) if numerical(d) => CliError::NotConverged(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<AuditError> for CliError {
    fn from(e: AuditError) -> Self {
        match &e {
            AuditError::Dual(d) if numerical(d) => CliError::NotConverged(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Numerical(m) => CliError::NotConverged(m),
            ExperimentError::Train(t) => t.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}
