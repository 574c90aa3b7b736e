//! File formats, dataset adapters, run persistence and the `mpt` command
//! line on top of [`mpt_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod files;
pub mod ingestion;
pub mod manifest;
pub mod report;
pub mod run;

pub use error::{Error, Result};
