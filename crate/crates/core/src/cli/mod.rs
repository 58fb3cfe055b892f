//! Configuration, run orchestration and output formats behind the `swirl-rings` binary.

pub mod commands;
pub mod config;
pub mod validate;

pub use commands::{kernel_check, output_root, solve, sweep, SolveOutcome, SweepOutcome, OUTPUT_ENV};
pub use config::{load_config, parse_config, RunConfig};
pub use validate::{run_validation, Check};
