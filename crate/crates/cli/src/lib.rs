//! Scenario runner for the `afflow` simulator.
//!
//! A scenario is one JSON config file; [`run::run_scenario`] validates it,
//! writes `manifest.json`, runs the computation and the enabled monitors and
//! writes CSV data plus `verdict.json`. Exit codes: 0 all monitors pass,
//! 1 a monitor failed, 2 invalid config, 3 numerical abort.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod export;
pub mod run;

pub use config::{Monitor, Scenario, ScenarioConfig};
pub use error::CliError;
pub use export::{export_plot_data, Table};
pub use run::{run_scenario, Outcome, RunOptions};
