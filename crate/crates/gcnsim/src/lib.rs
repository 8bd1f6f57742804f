//! Mapping compiler and performance model for GCN inference on a
//! heterogeneous accelerator: a dense tensor array, a sparse tensor array,
//! and a fabric-side row-wise SpMM unit fed from the same graph.
//!
//! The crate covers three layers:
//!
//! - **Mapping**: reorder a graph for community locality ([`reorder`]),
//!   group rows into fixed-trip-count sparse tiles ([`grouping`]), and
//!   split the adjacency into dense-engine tiles, sparse-engine tiles, and
//!   a scattered residual for the fabric unit ([`pegen`]).
//! - **Numerics**: reference kernels and file formats ([`matcore`]), plus a
//!   functional executor proving the split computes exactly the same
//!   product as the dense oracle ([`pegen::execute_plan_functional`],
//!   [`gcn`]).
//! - **Timing**: latency models calibrated against measured hardware
//!   figures ([`costmodel`]) and a discrete-event simulator of the
//!   pipelined two-phase execution ([`pipesim`]).
//!
//! Each major capability has a runnable demo under `examples/`; the
//! `gcnsim` binary exposes the same flows as subcommands.

pub mod costmodel;
pub mod error;
pub mod gcn;
pub mod grouping;
pub mod matcore;
pub mod pegen;
pub mod pipesim;
pub mod reorder;

pub mod cli;

pub use error::{Error, Result};
