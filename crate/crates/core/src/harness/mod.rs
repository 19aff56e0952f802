//! Configuration, orchestration and persistence for the experiments.

pub mod config;
pub mod experiments;
pub mod metrics;
pub mod training;

pub use config::{load_config, parse_config, ExperimentConfig};
pub use experiments::{run_experiment, ExperimentName};
pub use metrics::{Manifest, MetricsRecord};
