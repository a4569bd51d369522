//! Zero-inflated negative binomial ARMA models for count time series.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command line
//! and parallel Monte Carlo drivers live in the `zinbarma` crate.
#![no_std]
// `!(x > 0.0)` is how NaN gets rejected here
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod likelihood;
pub mod model;
pub mod simulation;
pub mod special;

pub use error::{Error, Result};
