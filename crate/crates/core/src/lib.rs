//! Occupation measures, Riesz potentials, fractional Sobolev seminorms and
//! generalized Stieltjes integrals for sampled paths.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod berman;
pub mod bvfun;
pub mod error;
pub mod fracint;
pub mod harness;
pub mod occupation;
pub mod pathgen;
pub mod potential;
pub mod quad;
pub mod seminorm;
pub mod types;
pub mod varcomp;

pub use error::{Error, Result};
pub use types::{DiscreteMeasure, EstimateReport, Interp, SampledPath, TimeWindow};
