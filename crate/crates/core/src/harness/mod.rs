//! Configuration, seeded orchestration and result files.
//!
//! Each subcommand writes into `<output root>/<command>/`: CSV files and a
//! `manifest.json` listing every file with its schema and row count.

pub mod config;
pub mod output;
pub mod runs;
pub mod verify;

pub use config::{ExperimentConfig, OUTPUT_DIR_ENV};
pub use output::{check_manifest, CheckRecord, CheckStatus, RunManifest, RunStatus, Schema};
pub use runs::{run_compare, run_fluid, run_gap, run_martingale, run_poisson_check, run_simulate, run_sweep};
pub use verify::run_verify;
