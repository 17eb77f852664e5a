//! Simulation and estimation toolkit for DC magnetometry with a collective
//! spin probe under dynamical decoupling.
//!
//! A weak DC field along the bias axis is refocused by the decoupling
//! pulses together with the stray-field noise. The phase relay estimator
//! (`prm`) reassembles the signal phase across many decoupling cycles so it
//! grows linearly in time while the noise stays suppressed.

pub mod config;
pub mod ddsim;
pub mod ensemble;
pub mod error;
pub mod fields;
pub mod metrics;
pub mod oracle;
pub mod prm;
pub mod probes;
pub mod rng;
pub mod scenarios;
pub mod spinalg;

pub use error::{Error, Result};
