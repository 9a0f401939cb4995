//! Std companion to `pfbound`: file formats, reference oracles, property
//! suites and the `pfb` command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod cli;
pub mod data_io;
pub mod metrics;
pub mod oracles;
