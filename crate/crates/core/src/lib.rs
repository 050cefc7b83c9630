//! Solvers for entropy-regularized mixed Nash equilibrium problems over
//! probability distributions on compact strategy spaces.
//!
//! The crate provides two interacting-particle algorithms (a simultaneous
//! Langevin descent-ascent scheme and a quasistatic inner-outer scheme),
//! an independent 1-d grid oracle for the regularized equilibrium, and
//! the evaluation metrics used to compare them.

pub mod dynamics;
pub mod error;
pub mod gridref;
pub mod kernel;
pub mod manifold;
pub mod metrics;

pub use error::{Error, Result};
