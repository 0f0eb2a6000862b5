//! Experiment harness for the fractional-moment localization laboratory.
//!
//! A run reads a TOML config, validates it against the per-kind key table,
//! executes the experiment in stages and writes CSV/JSON artifacts plus a
//! `manifest.json` with checksums, seeds and resolved parameters.

pub mod audit;
pub mod config;
pub mod error;
pub mod experiments;
pub mod model;
pub mod output;
pub mod plots;
pub mod run;
pub mod schema;

pub use error::{HResult, HarnessError};
pub use run::{run_config, run_file, RunOptions};
