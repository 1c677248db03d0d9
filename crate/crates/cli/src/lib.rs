//! Library side of the `spanlab` command: configuration and the
//! `gen-cpl`, `run`, `eval` and `report` commands.

pub mod commands;
pub mod config;

pub use commands::{eval, gen_cpl, noisy_output, report, run, ReportFile, RunSummary, TraceRecord};
pub use config::{BackendKind, MockPolicy, RunConfig};
