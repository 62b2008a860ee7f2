//! On-ramp merging by virtual rotation.
//!
//! Ramp vehicles are projected onto the mainline as a single virtual
//! platoon. Each follower listens to a multi-leader set of predecessors and
//! runs a linear spacing controller; ramp vehicles additionally track their
//! path with a speed-scheduled LQR.

pub mod control;
pub mod error;
pub mod lateral;
pub mod riccati;
pub mod sim;
pub mod stability;
pub mod topology;
pub mod virtual_axis;

pub use control::{ControllerConfig, VehicleState, VelocityFeedback, WeightScheme, WeightVector};
pub use error::{Error, Result};
pub use lateral::{
    CurvilinearState, FeedforwardSign, LateralGains, LateralPlant, LateralWeights, PathGeometry,
    PathSegment, Pose,
};
pub use sim::{
    Event, LateralSetup, LeaderProfile, MetricsOptions, MetricsReport, RunStatus, ScenarioConfig,
    SimulationTrace, VehicleSeries,
};
pub use stability::{EnergyMode, FeasibleRegion, RegionGrid, StabilityReport, TransferSpec};
pub use topology::{build_topology, CommTopology};
pub use virtual_axis::{Lane, LanePool, LaneVehicle, VehicleId, VirtualSequence};
