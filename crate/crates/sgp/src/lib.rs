//! Std companion to `sgp-core`: IDX loading, binary checkpoints and sequence
//! dumps, TOML experiment configs, CSV/JSON reports and the experiment runner
//! behind the `sgp` command.

mod bin;
pub mod checkpoint;
pub mod config;
pub mod dump;
mod error;
pub mod experiment;
pub mod idx;
pub mod report;

pub use error::{Error, Result};
