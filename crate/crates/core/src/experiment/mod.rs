//! Experiment harness: configuration, Monte Carlo runs, diagnostics and output.

pub mod config;
pub mod diagnostics;
pub mod output;
pub mod runner;

pub use config::{ConfigFile, ExperimentConfig, Mode, Profile, SchemeConfig, SchemeKind, Sweep, SweepVar, SCHEMA_VERSION};
pub use diagnostics::{quality_factor, transmitted_power_density};
pub use output::{run_experiment, run_experiment_with_workers, ExperimentReport, Summary, SummaryEntry};
pub use runner::{build_problem, run_scheme, ResultRow, SchemeRun, TrialTrace};
