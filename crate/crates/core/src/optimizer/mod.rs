//! Trust-region coordinate updates, block coordinate ascent and baselines.

pub mod baseline;
pub mod bca;
pub mod trust_region;

pub use baseline::{baseline_positions, nc_ma_mode, physical_objective, BaselineKind, NcMaOutcome};
pub use bca::{bca_narrowband, bca_wideband, evaluate_fixed, run_bca, BcaConfig, OptimizerState, OuterRecord, Problem, Stage, TraceRecord};
pub use trust_region::{feasible_interval, trm_step, QuadraticModel, StepOutcome, TrustRegionConfig};
