//! Hyperboloidal compactification and hyperboloidal layers for hyperbolic
//! equations on unbounded domains.

// Negated comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chebspec;
pub mod config;
pub mod coordmap;
pub mod diagnostics;
pub mod error;
pub mod evolve;
pub mod experiments;
pub mod fd1d;
pub mod models;
pub mod output;
pub mod presets;
pub mod verification;

pub use error::{Error, Result};
