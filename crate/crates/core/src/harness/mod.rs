//! Experiment registry and runners: configuration presets, seeded
//! training/test/baseline execution with checkpoints and CSV logs, and
//! report emission.

pub mod config;
pub mod logio;
pub mod report;
pub mod run;

pub use config::{lighting_grid, sweep_conditions, ExperimentConfig, ExperimentId, ImprintSetup, Rearing};
pub use report::emit_report;
pub use run::{run_random_baseline, run_test, run_training, RunRecord, TestOptions, TestRecord};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ppo(#[from] crate::ppo::PpoError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Checkpoint(#[from] crate::checkpoint::CheckpointError),
    #[error(transparent)]
    Analysis(#[from] crate::analysis::AnalysisError),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("malformed log {path}: {detail}")]
    BadLogFormat { path: String, detail: String },
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("internal error: {0}")]
    Internal(String),
}
