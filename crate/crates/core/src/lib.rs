//! Astrocyte-gated spiking central pattern generator for a hexapod.
//!
//! The crate is layered bottom-up:
//!
//! - [`engine`]: fixed-point multi-compartment LIF simulator.
//! - [`bursting`]: the five-compartment conditionally bursting neuron.
//! - [`cpg`]: the full 64-compartment locomotion network.
//! - [`decoder`] and [`plant`]: spike counts to joint angles to body motion.
//! - [`stimulus`]: seeded Poisson input.
//! - [`bridge`]: the epoch-synchronized control loop and timing metrics.
//! - [`config`] and [`experiments`]: file configuration and the reproducible
//!   experiment commands behind the `cpg` CLI.

pub mod bridge;
pub mod config;
pub mod bursting;
pub mod cpg;
pub mod decoder;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod plant;
pub mod stimulus;

pub use error::{CpgError, Result};
