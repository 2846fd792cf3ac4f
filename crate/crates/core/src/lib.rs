//! Output-density estimation for technical systems.
//!
//! Given a small experimental sample of a system and an (imperfect)
//! simulation model of it, this crate estimates the probability density of
//! the system output `Y = m*(X)` by
//!
//! 1. fitting a multivariate normal model to the observed inputs
//!    ([`input_model`]),
//! 2. training hierarchical neural-network surrogates of the simulation
//!    model, optionally corrected by a residual network fitted on the
//!    experimental data ([`surrogate`], [`estimators`]),
//! 3. propagating a large synthetic input sample through the surrogate and
//!    applying a kernel density estimate ([`kde`]).
//!
//! The [`benchmark`] module reproduces the accompanying simulation study:
//! four test functions, three imperfection levels, four competing density
//! estimators, scored by the L1 distance against a large-sample reference
//! density.

pub mod benchmark;
pub mod error;
pub mod estimators;
pub mod input_model;
pub mod kde;
pub mod rng;
pub mod simulator;
pub mod surrogate;

pub use error::{Error, Result};
