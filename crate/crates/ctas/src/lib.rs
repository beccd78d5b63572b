//! Files, configuration and batch commands around [`ctas_core`].
//!
//! - [`csvio`]: `histories.csv` / `effort.csv` ingestion and output;
//! - [`config`]: TOML model and simulation files;
//! - [`report`]: JSON fit reports and CSV tables;
//! - [`manifest`]: per-run provenance records;
//! - [`study`]: relative-bias studies;
//! - [`commands`]: the subcommands behind the `ctas` binary.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod manifest;
pub mod report;
pub mod study;

pub use error::{Error, Result};
