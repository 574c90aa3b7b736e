//! Mixed hard/soft prompt ensembles for low-resource text classification.
//!
//! Several prompt templates, hard (fixed wording) and soft (trainable
//! placeholder tokens), are each tuned on a small labeled set. They then
//! pseudo-label an unlabeled pool over several generations, each model
//! learning from a random subset of the others, and the last generation's
//! weighted ensemble produces soft targets for a standard classifier.
//!
//! The crate is `no_std` with `alloc`. File formats, ingestion and the CLI
//! live in the `mpt` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod backend;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod hash;
pub mod prompting;
pub mod pseudolabel;
pub mod sampling;
pub mod scheduler;
pub mod synthetic;

pub use error::{Error, Result};
