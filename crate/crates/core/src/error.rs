use thiserror::Error;

use crate::virtual_axis::VehicleId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vehicle id {0} appears more than once")]
    DuplicateId(VehicleId),

    #[error("{lane} lane: vehicles {first} and {second} share position {position} m")]
    EqualPositions {
        lane: &'static str,
        first: VehicleId,
        second: VehicleId,
        position: f64,
    },

    #[error("{lane} lane: vehicle {id} at {position} m is not behind its leader")]
    LaneOrder {
        lane: &'static str,
        id: VehicleId,
        position: f64,
    },

    #[error("vehicle {0} left the pool without an exit event")]
    MissingVehicle(VehicleId),

    #[error("index {index} out of range for {len} vehicles")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("predecessor count must be at least 1")]
    NoPredecessors,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("system is not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("Riccati solver failed: {0}")]
    Riccati(String),

    #[error("arc length {s} m outside path [0, {length}] m")]
    OutOfPath { s: f64, length: f64 },

    #[error("trace needs at least 2 samples, got {0}")]
    TraceTooShort(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
