//! Discrete-event model of an opportunistic vehicular identification system.
//!
//! A roadside unit (RSU) broadcasts identification beacons to a vehicle over a
//! modeled Bluetooth 5 or Wize link. The vehicle keeps what it hears and syncs
//! it into a DHT spread across edge gateways whenever one is in range.
//!
//! The crate is `no_std` (it needs `alloc`) and does no IO. File formats, the
//! matrix runner and the CLI live in the `oecsim` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod beacon;
pub mod engine;
pub mod gateway;
pub mod metrics;
pub mod mobility;
pub mod radio;
pub mod scenario;
pub mod sim;

pub use beacon::{Frame, IdentificationRecord, MeshGroup, MobileNode, NodeId, Rsu};
pub use engine::{EventId, EventQueue, RngStream, RngStreams, SimTime};
pub use metrics::{CellKey, LatencyStats, RunMetrics};
pub use mobility::{Point, RsuPlacement, Trajectory};
pub use radio::{LatencyModelParams, LinkModelParams, Modulation, RadioProfile, Technology};
pub use scenario::Scenario;
pub use sim::{run_scenario, BeaconOutcome, BeaconRow, RunOutput};
