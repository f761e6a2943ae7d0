//! Command-line front end: configuration, the test registry, the runner and
//! report/path files.

pub mod config;
pub mod output;
pub mod registry;
pub mod runner;

pub use config::{ConfigError, ExperimentConfig};
pub use runner::{emit_paths, run, RunError, RunOutcome};

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const FAIL: i32 = 1;
    pub const CONFIG: i32 = 2;
}
