//! Experiment harness: configuration, single runs, learning-rate tuning
//! with multi-seed aggregation, bound verification, and persistence.

mod config;
mod persist;
mod runner;
mod tune;
mod verify;

pub use config::{
    parse_override, ExperimentConfig, OptimizerKind, OptimizerSpec, SweepSpec, VerifySpec,
};
pub use persist::{csv_name, persist, read_csv, render_csv};
pub use runner::{run_single, DivergenceInfo, RunRecord};
pub use tune::{tune_and_aggregate, Aggregate, OptimizerReport, TuneOutcome};
pub use verify::{verify_bounds, VerificationReport};
