//! One experiment cell: geometry, speed, radio technology and everything
//! else a run needs. Parsing lives in the `oecsim` crate; this is the
//! validated in-memory form.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::beacon::{NodeId, RadioSetup};
use crate::engine::{stable_hash64, SimTime};
use crate::gateway::{DEFAULT_REPLICATION, DEFAULT_TTL};
use crate::metrics::CellKey;
use crate::mobility::{kmh_to_mps, MobilityError, Point, RsuPlacement, Trajectory};
use crate::radio::{LatencyModelParams, LinkModelParams, RadioProfile, Technology, WIZE_FOURGFSK_PENALTY_DB};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid {field}: {reason}")]
pub struct ScenarioError {
    pub field: &'static str,
    pub reason: String,
}

impl ScenarioError {
    pub fn new(field: &'static str, reason: impl Into<String>) -> Self {
        ScenarioError {
            field,
            reason: reason.into(),
        }
    }
}

/// Straight road from A to B with the RSU beside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub point_a: Point,
    pub point_b: Point,
    /// RSU position along the road, meters from A.
    pub rsu_along: f64,
    /// RSU distance from the road axis, meters.
    pub rsu_offset: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            point_a: Point::new(0.0, 0.0),
            point_b: Point::new(1000.0, 0.0),
            rsu_along: 500.0,
            rsu_offset: 10.0,
        }
    }
}

impl Geometry {
    pub fn road_length(&self) -> f64 {
        crate::mobility::distance(self.point_a, self.point_b)
    }

    pub fn rsu(&self) -> Result<RsuPlacement, MobilityError> {
        RsuPlacement::beside_road(self.point_a, self.point_b, self.rsu_along, self.rsu_offset)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub technology: Technology,
    pub speed_kmh: f64,
    pub geometry: Geometry,
    /// Seconds between beacons.
    pub beacon_period: f64,
    pub frame_bytes: usize,
    pub seed: u64,
    /// Repetitions; repetition `i` runs with seed `seed + i`.
    pub runs: u32,
    /// Profile, link and latency models. Disruption windows live in `radio.link`.
    pub radio: RadioSetup,
    /// Mesh group the RSU publishes to (BLE).
    pub rsu_group: u32,
    /// Mesh group the vehicle listens to (BLE).
    pub mobile_group: u32,
    /// Rate the vehicle's Wize receiver is tuned to; `None` follows the RSU.
    pub mobile_data_rate: Option<f64>,
    pub gateways: Vec<Point>,
    /// Vehicle-to-gateway contact range, meters.
    pub gateway_range: f64,
    /// Seconds between contact checks while the vehicle is near a gateway.
    pub sync_period: f64,
    pub replication_factor: usize,
    /// Carry TTL for unsynced identifications, seconds.
    pub ttl: f64,
    /// Extra time after the vehicle is back at A so in-flight frames land.
    pub drain: f64,
}

pub const DEFAULT_FRAME_BYTES: usize = 108;
pub const DEFAULT_BEACON_PERIOD: f64 = 1.0;

impl Scenario {
    /// Every default applied. `data_rate` is only consulted for Wize.
    pub fn with_defaults(technology: Technology, data_rate_bps: f64) -> Result<Self, ScenarioError> {
        let profile = match technology {
            Technology::Ble5 => RadioProfile::ble5(),
            Technology::Wize => RadioProfile::wize(data_rate_bps, WIZE_FOURGFSK_PENALTY_DB)
                .map_err(|e| ScenarioError::new("data_rate", format!("{e}")))?,
        };
        let geometry = Geometry::default();
        Ok(Scenario {
            name: String::new(),
            technology,
            speed_kmh: 30.0,
            geometry,
            beacon_period: DEFAULT_BEACON_PERIOD,
            frame_bytes: DEFAULT_FRAME_BYTES,
            seed: 1,
            runs: 1,
            radio: RadioSetup {
                profile,
                link: LinkModelParams::for_technology(technology),
                latency: LatencyModelParams::for_technology(technology),
            },
            rsu_group: 1,
            mobile_group: 1,
            mobile_data_rate: None,
            gateways: alloc::vec![Point::new(geometry.point_a.x, geometry.point_a.y - 10.0)],
            gateway_range: 50.0,
            sync_period: 1.0,
            replication_factor: DEFAULT_REPLICATION,
            ttl: DEFAULT_TTL,
            drain: 5.0,
        })
    }

    pub fn data_rate_bps(&self) -> f64 {
        self.radio.profile.data_rate_bps
    }

    /// `name`, or a generated id when the name is empty.
    pub fn scenario_id(&self) -> String {
        if self.name.is_empty() {
            format!("{}-{}-{}kmh", self.technology, self.data_rate_bps(), self.speed_kmh)
        } else {
            self.name.clone()
        }
    }

    pub fn cell_key(&self) -> CellKey {
        CellKey {
            technology: self.technology,
            data_rate_bps: self.data_rate_bps() as u32,
            speed_kmh: self.speed_kmh,
        }
    }

    pub fn speed_mps(&self) -> f64 {
        kmh_to_mps(self.speed_kmh)
    }

    pub fn trajectory(&self) -> Result<Trajectory, MobilityError> {
        Trajectory::new(self.geometry.point_a, self.geometry.point_b, self.speed_mps(), SimTime::ZERO)
    }

    pub fn rsu_id(&self) -> NodeId {
        NodeId(stable_hash64(&[b"rsu", &self.rsu_group.to_le_bytes()]))
    }

    pub fn mobile_id(&self) -> NodeId {
        NodeId(stable_hash64(&[b"mobile"]))
    }

    pub fn gateway_id(&self, index: usize) -> NodeId {
        NodeId(stable_hash64(&[b"gateway", &(index as u64).to_le_bytes()]))
    }

    pub fn cloud_id(&self) -> NodeId {
        NodeId(stable_hash64(&[b"cloud"]))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let positive = |field, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ScenarioError::new(field, format!("must be a positive number, got {v}")))
            }
        };
        positive("speed", self.speed_kmh)?;
        positive("beacon_period", self.beacon_period)?;
        positive("gateway.range", self.gateway_range)?;
        positive("gateway.sync_period", self.sync_period)?;
        positive("gateway.ttl", self.ttl)?;
        if !(self.drain.is_finite() && self.drain >= 0.0) {
            return Err(ScenarioError::new("drain", "must be >= 0"));
        }
        if self.technology != self.radio.profile.technology {
            return Err(ScenarioError::new("technology", "does not match the radio profile"));
        }
        if self.runs == 0 {
            return Err(ScenarioError::new("runs", "must be at least 1"));
        }
        if self.replication_factor == 0 {
            return Err(ScenarioError::new("gateway.replication_factor", "must be at least 1"));
        }
        if let Some(rate) = self.mobile_data_rate {
            positive("mobile.data_rate", rate)?;
        }
        if !self.geometry.point_a.is_finite() || !self.geometry.point_b.is_finite() || self.geometry.road_length() == 0.0 {
            return Err(ScenarioError::new("geometry", "point_a and point_b must be distinct finite points"));
        }
        if !self.geometry.rsu_along.is_finite() {
            return Err(ScenarioError::new("geometry.rsu_along", "must be finite"));
        }
        if !(self.geometry.rsu_offset.is_finite() && self.geometry.rsu_offset >= 0.0) {
            return Err(ScenarioError::new("geometry.rsu_offset", "must be >= 0"));
        }
        if self.gateways.iter().any(|p| !p.is_finite()) {
            return Err(ScenarioError::new("gateway.positions", "must be finite points"));
        }
        self.radio
            .validate()
            .map_err(|e| ScenarioError::new("radio", format!("{e}")))?;
        Ok(())
    }
}
