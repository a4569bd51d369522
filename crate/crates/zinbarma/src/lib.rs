//! File formats, configs, reports, the command line and a parallel Monte
//! Carlo driver around `zinbarma-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod mc;
pub mod report;

pub use error::{AppError, Result};
pub use zinbarma_core as core;
