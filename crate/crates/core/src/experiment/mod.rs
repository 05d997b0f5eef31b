//! Configuration, sweeps, and the experiment runners behind the CLI.

pub mod config;
pub mod report;
pub mod runs;
pub mod sweep;

pub use crate::scaling::{fit_scaling_exponent, ScalingFit};
pub use config::{ExperimentConfig, PerturbationKind};
pub use report::{Check, RunSummary, SCHEMA_VERSION};
pub use runs::{run_experiment, run_property, Experiment, Property, Section};
pub use sweep::{ode_residuals, run_theorem_sweep, ResidualTable, SweepRecord, TheoremSweep};
