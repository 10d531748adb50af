//! Spectral simulation of the stochastic time-fractional diffusion equation
//! driven by fractional Brownian motion, and recovery of its source factors
//! from final-time statistics.

// Coefficient tables keep every printed digit, and `!(x > 0.0)` is the
// intended way to reject NaN along with non-positive values.
#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fintegral;
pub mod inverse;
pub mod fbm;
pub mod forward;
pub mod mlf;
pub mod quad;
pub mod rng;
pub mod selftest;
pub mod stats;

pub use error::{Error, Result};
