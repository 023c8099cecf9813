//! Synthetic longitudinal cohort simulation and time-aware early-risk
//! detection evaluation.
//!
//! Simulated risk states are synthetic constructs, not clinical diagnoses.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod card;
pub mod config;
pub mod deployment;
pub mod detect;
pub mod digest;
pub mod error;
pub mod experiments;
pub mod features;
pub mod io;
pub mod learner;
pub mod metrics;
pub mod model;
pub mod perturb;
pub mod priors;
pub mod probe;
pub mod rng;
pub mod schema;
pub mod simulate;
pub mod splits;

pub use error::{Error, Result};
