//! Scenario loading, built-in examples and run reports.

pub mod builtin;
pub mod report;
pub mod run;
pub mod scenario;

pub use builtin::{example, EXAMPLES};
pub use report::{Check, RunReport};
pub use run::{run_scenario, run_scenario_with, RunOptions};
pub use scenario::Scenario;

use crate::error::Result;

/// Runs the built-in example `name`.
pub fn run_example(name: &str) -> Result<RunReport> {
    run_scenario(&example(name)?)
}
