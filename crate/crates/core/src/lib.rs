//! Variable-inertia rigid-body simulation and inertial-morphing attitude
//! control for a tethered two-robot dumbbell.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attitude;
pub mod dynamics;
pub mod error;
pub mod gait;
pub mod log;
pub mod model;
pub mod mpc;
pub mod scenario;
pub mod sizing;

pub use error::{Error, Result};
