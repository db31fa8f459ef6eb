//! Ratings and rankings from paired-comparison data.
//!
//! The crate estimates Bradley-Terry abilities by maximum likelihood
//! ([`btmle`]), regularizes them with an all-pairs fused lasso penalty
//! ([`fusedlasso`]) or with nonparametric empirical Bayes
//! ([`npmle`]), compares them with count-based scores ([`scores`]), and
//! reproduces a Monte Carlo comparison of those procedures ([`simlab`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod btmle;
pub mod comparisons;
pub mod error;
pub mod fusedlasso;
pub mod npmle;
pub mod pipeline;
pub mod scores;
pub mod simlab;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
