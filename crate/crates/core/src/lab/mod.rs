//! Experiment orchestration: the example catalog, stability sweeps, reports and the CLI.

pub mod catalog;
pub mod cli;
pub mod config;
pub mod report;
pub mod stability;

pub use catalog::{catalog, catalog_by_name, CatalogName};
pub use config::{ExperimentConfig, Metric};
pub use report::ConvergenceReport;
pub use stability::{run_stability, test_bank, weak_l2_pairings};
