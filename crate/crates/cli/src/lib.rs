//! Command-line orchestration: config resolution, checkpointed trajectory
//! averaging and artifact export for the simulate / infer / predict /
//! spectrum subcommands.

pub mod app;
pub mod averaging;
pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run_infer, run_predict, run_simulate, run_spectrum, PeakReport};
pub use config::{NoiseToggles, ProtocolPreset, ResolvedRun, RunConfig};
pub use error::{CliError, Result};
