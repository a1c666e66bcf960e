//! Reproducible experiment scenarios: configuration, initial-condition
//! families, scenario engines, and artifact emission with certification
//! checks.

pub mod config;
pub mod initial;
pub mod output;
pub mod scenario;

pub use config::{ExperimentConfig, Scenario};
pub use initial::InitialState;
pub use output::{Certification, RunSummary};
pub use scenario::run_scenario;
