//! Experiment harness: TOML specs, the five commands, CSV and SVG output.

pub mod commands;
pub mod format;
pub mod spec;
pub mod svg;

pub use commands::{
    cmd_benchmark, cmd_calibrate, cmd_convergence, cmd_phy_table, cmd_simulate, spec_hash, CommandOutput,
    HarnessError,
};
pub use spec::ExperimentSpec;
