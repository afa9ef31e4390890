//! Conditional SMC kernels for joint smoothing in high-dimensional
//! state-space models: i-CSMC, RW-EHMM and i-RW-CSMC, together with their
//! high-dimensional limit laws, chain diagnostics, static-parameter samplers
//! and an experiment harness.

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod limit_laws;
pub mod model;
pub mod params;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};
