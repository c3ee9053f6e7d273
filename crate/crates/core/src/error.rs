use thiserror::Error;

use crate::engine::CompartmentId;

/// Errors raised while building, configuring or running a simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CpgError {
    #[error("decay parameter {0} outside [0, 4096]")]
    DecayOutOfRange(i32),

    #[error("duplicate compartment id {0}")]
    DuplicateId(CompartmentId),

    #[error("unknown compartment id {0}")]
    UnknownId(CompartmentId),

    #[error("compartment {0} has {1} children (at most 2 allowed)")]
    TooManyChildren(CompartmentId, usize),

    #[error("compartment {child} has more than one parent ({first} and {second})")]
    MultipleParents {
        child: CompartmentId,
        first: CompartmentId,
        second: CompartmentId,
    },

    #[error("compartment tree containing {0} has a cycle")]
    Cycle(CompartmentId),

    #[error("join rule of compartment {id} does not match its children: {reason}")]
    JoinArity { id: CompartmentId, reason: String },

    #[error("synapse source {0} is a non-spiking compartment")]
    NonSpikingSource(CompartmentId),

    #[error("synapse {src} -> {dst} links two compartments of the same tree")]
    IntraTreeSynapse { src: CompartmentId, dst: CompartmentId },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("poisson rate {0} Hz implies a per-step probability above 1")]
    RateTooHigh(f64),

    #[error("empty window: {0}")]
    EmptyWindow(String),

    #[error("frame decode error: {0}")]
    Frame(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no gait detected: {0}")]
    NoGait(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CpgError {
    fn from(e: std::io::Error) -> Self {
        CpgError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CpgError>;
