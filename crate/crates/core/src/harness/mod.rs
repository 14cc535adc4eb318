//! Experiment driver behind the CLI: configuration, seeded runs, figure
//! presets, sweeps and CSV output.

pub mod config;
pub mod experiment;
pub mod output;
pub mod presets;

pub use config::{ConfigError, ExperimentConfig, Scenario};
pub use experiment::{cmd_run, simulate, ExperimentError, RunRecord, Trial};
pub use presets::{cmd_preset, cmd_sweep, SweepSpec};
