//! Quadratic upper bounds on log-linear partition functions and the
//! stochastic optimizers built on them.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation over caller-owned buffers; file formats, reference oracles
//! and the command-line harness live in `pfbound-harness`.
//!
//! Layout:
//! - [`linear_model`]: feature maps, exact log-partition, loss and gradients.
//! - [`bound_full`]: the dense bound `(log z, mu, Sigma)` built label by label.
//! - [`bound_lowrank`]: the rank-k plus diagonal majorizer and Woodbury solves.
//! - [`optimizers`]: update rules (batch, stochastic, low-rank, SGD) and
//!   convergence constants.
//! - [`train`]: the seeded mini-batch training loop.
#![no_std]
// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod bound_full;
pub mod bound_lowrank;
mod error;
pub mod linalg;
pub mod linear_model;
pub mod math;
pub mod optimizers;
pub mod train;

pub use error::{Error, Result};
pub use linear_model::{FeatureList, FeatureMap, LabeledDataset};
