//! Bayesian mixed-effect model linking a single genetic variant to a whole
//! brain network phenotype, with a low-rank sparse effect matrix, edge-wise
//! polygenic and residual variances, and a Gibbs/Metropolis sampler.

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baseline;
pub mod cli;
pub mod error;
pub mod io;
pub mod model;
pub mod projection;
pub mod sampler;
pub mod selection;
pub mod simgen;

pub use error::{BnmeError, Result};
