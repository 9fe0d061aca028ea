//! Experiment harness for movable-antenna beam coverage.
//!
//! [`config`] parses TOML experiment files, [`experiment`] runs the schemes
//! and writes CSV results plus a JSON manifest, [`analysis`] audits and
//! compares stored results.

pub mod analysis;
pub mod config;
pub mod experiment;
pub mod output;

pub use analysis::{audit_fine_grid, compare_schemes, load_run, AuditReport, Comparison};
pub use config::{load_config, parse_config, ConfigError, ExperimentConfig};
pub use experiment::{run_experiment, run_sweep, RunManifest, SweepParam, SweepSummary};
