//! Monte-Carlo experiments for the uplink, sensor-fusion and relay solvers.
//!
//! An [`ExperimentConfig`] names a scenario, an SNR grid, a trial count and
//! the algorithms to compare; [`run_experiment`] produces one
//! [`RunRecord`] per (sweep point, algorithm, trial, SNR).

pub mod channel;
pub mod config;
pub mod experiment;
pub mod record;

pub use channel::{exponential_corr, relay_csi_from_draws, sample_channel, sample_relay_csi, source_covariance, RelayCsi};
pub use config::{
    Algorithm, ConstraintSpec, DistanceLaw, ExperimentConfig, OracleSettings, RelaySettings, ScenarioKind,
    SensorSettings, UplinkSettings,
};
pub use experiment::{run_experiment, summarize, SummaryRow};
pub use record::{to_csv_bytes, write_csv, RunRecord};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Solver {
        context: String,
        source: matmono_core::Error,
    },

    #[error(transparent)]
    Numeric(#[from] matmono_core::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}
