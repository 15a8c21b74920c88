//! Bayesian nonlinear tensor additive regression with a functional fused
//! elastic net prior.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod grid;
pub mod model;
pub mod quadrature;
pub mod sampler;
pub mod selection;
pub mod simgen;
pub mod spline;
pub mod tuning;

pub use error::{FenError, Result};
