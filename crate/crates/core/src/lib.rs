//! Scaled gradient projection (SGP) for continual learning.
//!
//! The crate is `no_std` and only needs `alloc`. It contains everything that is
//! pure computation:
//!
//! - [`linalg`]: dense matrices, a deterministic one-sided Jacobi SVD and
//!   energy-based rank selection.
//! - [`net`]: a small feed-forward network (dense and valid 2D convolution
//!   layers, ReLU, one classifier head per task) with analytic backprop and
//!   activation capture for representation matrices.
//! - [`gpm`]: the per-layer basis memory with importance, its update after
//!   each task and the scaled gradient projection.
//! - [`optim`]: projected SGD, Adam-GP and a pre-projected Adam baseline.
//! - [`trainer`]: the sequential task loop and ACC / BWT / forward transfer.
//! - [`data`]: seeded synthetic task suites and task builders for labelled
//!   sample pools.
//!
//! File formats, configuration and the command line live in the `sgp` crate.

#![no_std]
// `!(x > 0.0)` is the NaN-rejecting form used by every validator
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
mod error;
pub mod gpm;
pub mod linalg;
pub(crate) mod math;
pub mod net;
pub mod optim;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use gpm::{BasisMemory, LayerMemory, ProjectionMode, ScaleConfig};
pub use linalg::{Matrix, SvdResult};
pub use net::{LayerSpec, Network};
pub use trainer::{AccuracyMatrix, Method, TrainConfig};
