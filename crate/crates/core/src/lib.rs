//! Core algorithms for building and benchmarking tabular foundation models.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std`: tables and schema inference, the cleaning rules,
//! mode-specific normalization, a small differentiable substrate, the
//! CTGAN / VAE / GReaT generators, the pretrain / finetune orchestration and
//! the synthetic-vs-real quality metrics. File formats, the checkpoint
//! container and the command line live in the `tabfm` crate.

#![no_std]
#![cfg_attr(test, allow(unused_imports))]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod clean;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod great;
pub mod kmeans;
pub mod models;
pub mod neural;
mod patterns;
pub mod real;
pub mod rng;
pub mod split;
pub mod table;
pub mod training;
pub mod transform;

pub use error::{Error, Result};
pub use real::Real;
pub use table::{Cell, ColumnKind, ColumnMeta, Table};
