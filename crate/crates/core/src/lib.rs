//! Hybrid quantum-classical recommendation pipeline.
//!
//! The crate turns raw user ratings into taste archetypes, stores the
//! archetypes in a variational quantum Hopfield associative memory, and
//! classifies users by running their encoded preferences through that
//! memory, in ideal or noisy simulation.

pub mod archetypes;
pub mod artifacts;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod hybrid;
pub mod metrics;
pub mod nn;
pub mod noise;
pub mod qham;
pub mod qsim;
pub mod synth;

pub use error::{Error, Result};
