//! Runs one repetition of a [`Scenario`] through the event queue.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::beacon::{Addressing, ArrivalOutcome, BeaconError, Frame, GroupId, MobileNode, NodeId, Rsu, TxOutcome};
use crate::engine::{EngineError, Event, EventQueue, RngStream, SimTime};
use crate::gateway::{sync_identifications, Dht, DhtEntry, GatewayError, Layer, RoutingTable};
use crate::metrics::RunMetrics;
use crate::mobility::{contact_intervals, distance, MobilityError, Point, RsuPlacement, Trajectory};
use crate::radio::{self, Reception, Technology};
use crate::scenario::{Scenario, ScenarioError};

pub const LOSS_STREAM: &str = "radio-loss";
pub const LATENCY_STREAM: &str = "ble-latency";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Beacon(#[from] BeaconError),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("beacon {0} never resolved before the run ended")]
    Unresolved(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BeaconOutcome {
    Received,
    RadioLost,
    Filtered,
}

impl BeaconOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            BeaconOutcome::Received => "received",
            BeaconOutcome::RadioLost => "radio_lost",
            BeaconOutcome::Filtered => "filtered",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeaconRow {
    pub seq: u64,
    pub tx_time: SimTime,
    pub outcome: BeaconOutcome,
    /// Set only for received beacons.
    pub latency: Option<f64>,
}

/// One hand-off of carried identifications to a gateway.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncEvent {
    pub at: SimTime,
    pub gateway: NodeId,
    pub synced: usize,
    pub expired: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EventCounts {
    pub beacon_tx: u64,
    pub frame_arrival: u64,
    pub move_sample: u64,
    pub gateway_sync: u64,
    pub run_end: u64,
}

impl EventCounts {
    pub fn total(&self) -> u64 {
        self.beacon_tx + self.frame_arrival + self.move_sample + self.gateway_sync + self.run_end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    /// Indexed by sequence number.
    pub beacons: Vec<BeaconRow>,
    pub dht: Vec<DhtEntry>,
    pub syncs: Vec<SyncEvent>,
    pub events: EventCounts,
    /// Time the vehicle is back at A.
    pub traversal_end: SimTime,
    pub end_time: SimTime,
    /// Identifications still on the vehicle when the run stopped.
    pub unsynced_at_end: usize,
    /// Peers the vehicle's routing table learned through gateway contacts.
    pub peers_known: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    BeaconTx,
    FrameArrival(Frame),
    NodeMoveSample,
    /// Start of a contact window with gateway `i`.
    GatewaySync(usize),
    RunEnd,
}

struct World<'a> {
    scenario: &'a Scenario,
    traj: Trajectory,
    rsu_at: RsuPlacement,
    rsu: Rsu,
    mobile: MobileNode,
    mobile_table: RoutingTable,
    gateway_ids: Vec<NodeId>,
    gateway_tables: BTreeMap<NodeId, RoutingTable>,
    dht: Dht,
    loss_rng: RngStream,
    latency_rng: RngStream,
    rows: Vec<(SimTime, Option<BeaconOutcome>, Option<f64>)>,
    syncs: Vec<SyncEvent>,
    counts: EventCounts,
    run_end: SimTime,
    horizon: SimTime,
}

impl World<'_> {
    fn speed_at(&self, t: SimTime) -> f64 {
        if t > self.traj.depart_at() && t < self.traj.arrive_at() {
            self.traj.speed()
        } else {
            0.0
        }
    }

    fn handle(&mut self, queue: &mut EventQueue<Kind>, event: Event<Kind>) -> Result<(), SimError> {
        let now = event.fire_at;
        match event.kind {
            Kind::BeaconTx => {
                self.counts.beacon_tx += 1;
                let pos = self.traj.position_clamped(now);
                let rx = Reception {
                    distance_m: distance(pos, self.rsu_at.position),
                    at: now,
                    speed_mps: self.speed_at(now),
                    frame_bytes: self.scenario.frame_bytes,
                };
                let outcome = self
                    .rsu
                    .on_beacon_tx(now, &self.scenario.radio, rx, &mut self.loss_rng, &mut self.latency_rng)?;
                match outcome {
                    TxOutcome::Lost(_) => self.rows.push((now, Some(BeaconOutcome::RadioLost), None)),
                    TxOutcome::Arrives { frame, at } => {
                        self.rows.push((now, None, None));
                        queue.schedule(at, Kind::FrameArrival(frame))?;
                    }
                }
                if let Some(next) = self.rsu.next_tx(now, self.run_end) {
                    queue.schedule(next, Kind::BeaconTx)?;
                }
            }
            Kind::FrameArrival(frame) => {
                self.counts.frame_arrival += 1;
                let row = &mut self.rows[frame.seq as usize];
                match self.mobile.on_frame_arrival(&frame, now) {
                    ArrivalOutcome::Stored(rec) => {
                        row.1 = Some(BeaconOutcome::Received);
                        row.2 = Some(rec.latency);
                    }
                    ArrivalOutcome::Filtered => row.1 = Some(BeaconOutcome::Filtered),
                    ArrivalOutcome::Duplicate => {}
                }
            }
            Kind::NodeMoveSample => {
                self.counts.move_sample += 1;
                self.sync_in_range(now)?;
                let next = now + self.scenario.sync_period;
                if next < self.horizon {
                    queue.schedule(next, Kind::NodeMoveSample)?;
                }
            }
            Kind::GatewaySync(i) => {
                self.counts.gateway_sync += 1;
                self.sync_with(i, now)?;
            }
            Kind::RunEnd => {
                self.counts.run_end += 1;
                self.sync_in_range(now)?;
            }
        }
        Ok(())
    }

    fn sync_in_range(&mut self, now: SimTime) -> Result<(), SimError> {
        let pos = self.traj.position_clamped(now);
        for i in 0..self.gateway_ids.len() {
            if distance(pos, self.scenario.gateways[i]) <= self.scenario.gateway_range {
                self.sync_with(i, now)?;
            }
        }
        Ok(())
    }

    fn sync_with(&mut self, i: usize, now: SimTime) -> Result<(), SimError> {
        let gid = self.gateway_ids[i];
        let gw = self
            .gateway_tables
            .get_mut(&gid)
            .ok_or(GatewayError::UnknownGateway(gid))?;
        let gw_known = gw.known_peers();
        let mobile_known = self.mobile_table.known_peers();
        gw.discover_peers(&self.mobile_table.self_record(now), &mobile_known);
        let gw_self = gw.self_record(now);
        self.mobile_table.discover_peers(&gw_self, &gw_known);

        if self.mobile.unsynced().is_empty() {
            return Ok(());
        }
        let report = sync_identifications(&mut self.mobile, &mut self.dht, gid, now, usize::MAX, self.scenario.ttl)?;
        if report.synced + report.expired > 0 {
            self.syncs.push(SyncEvent {
                at: now,
                gateway: gid,
                synced: report.synced,
                expired: report.expired,
            });
        }
        Ok(())
    }
}

fn listen_addressing(s: &Scenario) -> Addressing {
    match s.technology {
        Technology::Ble5 => Addressing::Mesh(GroupId(s.mobile_group)),
        Technology::Wize => Addressing::Channel {
            carrier_hz: s.radio.profile.carrier_frequency_hz,
            data_rate_bps: s.mobile_data_rate.unwrap_or(s.radio.profile.data_rate_bps),
        },
    }
}

/// Runs repetition `repetition` of `scenario` with seed `scenario.seed + repetition`.
///
/// The vehicle leaves A at t = 0, turns at B and parks at A. The RSU beacons
/// until the vehicle is back; the run then continues for `drain` seconds (or
/// the worst-case delivery delay, if longer) so every in-flight frame lands.
pub fn run_scenario(scenario: &Scenario, repetition: u32) -> Result<RunOutput, SimError> {
    scenario.validate()?;
    let seed = scenario.seed.wrapping_add(u64::from(repetition));
    let traj = scenario.trajectory()?;
    let rsu_at = scenario.geometry.rsu()?;
    let profile = &scenario.radio.profile;
    let lat = &scenario.radio.latency;

    let rsu_addressing = Addressing::for_profile(profile, GroupId(scenario.rsu_group));
    let rsu = Rsu::new(scenario.rsu_id(), scenario.beacon_period, rsu_addressing, scenario.frame_bytes)?;
    let mobile = MobileNode::new(scenario.mobile_id(), listen_addressing(scenario));

    let cloud = RoutingTable::new(scenario.cloud_id(), Layer::Cloud);
    let mut dht = Dht::new(scenario.replication_factor);
    let gateway_ids: Vec<NodeId> = (0..scenario.gateways.len()).map(|i| scenario.gateway_id(i)).collect();
    let mut gateway_tables = BTreeMap::new();
    for &gid in &gateway_ids {
        dht.add_gateway(gid);
        gateway_tables.insert(gid, RoutingTable::new(gid, Layer::Gateway));
    }
    // wired backbone: every gateway knows the others and the cloud from the start
    let backbone: Vec<_> = gateway_tables
        .values()
        .map(|t| t.self_record(SimTime::ZERO))
        .chain(core::iter::once(cloud.self_record(SimTime::ZERO)))
        .collect();
    for table in gateway_tables.values_mut() {
        for peer in &backbone {
            if peer.peer_id != table.owner() {
                table.discover_peers(peer, &[]);
            }
        }
    }

    let run_end = traj.arrive_at();
    let worst_delay = radio::airtime(profile, scenario.frame_bytes)
        + lat.fixed_overhead
        + if profile.technology == Technology::Ble5 {
            lat.rendezvous_mean + lat.rendezvous_jitter
        } else {
            0.0
        };
    let horizon = run_end + scenario.drain.max(worst_delay);

    let mut queue = EventQueue::new();
    rsu.start(&mut queue, Kind::BeaconTx)?;
    for (i, &g) in scenario.gateways.iter().enumerate() {
        let gw = RsuPlacement {
            position: g,
            lateral_offset: 0.0,
        };
        for window in contact_intervals(&traj, &gw, scenario.gateway_range) {
            queue.schedule(window.start, Kind::GatewaySync(i))?;
        }
    }
    queue.schedule(SimTime::ZERO, Kind::NodeMoveSample)?;
    queue.schedule(horizon, Kind::RunEnd)?;

    let mut world = World {
        scenario,
        traj,
        rsu_at,
        rsu,
        mobile,
        mobile_table: RoutingTable::new(scenario.mobile_id(), Layer::Iot),
        gateway_ids,
        gateway_tables,
        dht,
        loss_rng: RngStream::new(seed, LOSS_STREAM),
        latency_rng: RngStream::new(seed, LATENCY_STREAM),
        rows: Vec::new(),
        syncs: Vec::new(),
        counts: EventCounts::default(),
        run_end,
        horizon,
    };
    while let Some(event) = queue.pop_until(horizon) {
        world.handle(&mut queue, event)?;
    }

    let mut beacons = Vec::with_capacity(world.rows.len());
    for (seq, (tx_time, outcome, latency)) in world.rows.iter().enumerate() {
        let outcome = outcome.ok_or(SimError::Unresolved(seq as u64))?;
        beacons.push(BeaconRow {
            seq: seq as u64,
            tx_time: *tx_time,
            outcome,
            latency: *latency,
        });
    }
    let latencies = world.mobile.records().iter().map(|r| r.latency).collect();
    let metrics = RunMetrics::new(
        scenario.scenario_id(),
        scenario.cell_key(),
        repetition,
        seed,
        world.rsu.sent,
        world.rsu.radio_lost,
        world.mobile.filtered,
        latencies,
        world.mobile.synced_count() as u64,
        world.mobile.expired_count() as u64,
    );
    Ok(RunOutput {
        metrics,
        beacons,
        dht: world.dht.entries(),
        syncs: world.syncs,
        events: world.counts,
        traversal_end: run_end,
        end_time: horizon,
        unsynced_at_end: world.mobile.unsynced().len(),
        peers_known: world.mobile_table.known_peers().len(),
    })
}

/// Starting point of the vehicle; also where it parks.
pub fn home(scenario: &Scenario) -> Point {
    scenario.geometry.point_a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beacon::{beacon_count, IdentificationRecord};
    use crate::gateway::{DhtKey, DhtLookup};

    fn wize(rate: f64, speed: f64) -> Scenario {
        let mut s = Scenario::with_defaults(Technology::Wize, rate).unwrap();
        s.speed_kmh = speed;
        s
    }

    #[test]
    fn one_beacon_per_period_over_the_traversal() {
        let s = wize(2400.0, 30.0);
        let out = run_scenario(&s, 0).unwrap();
        let traversal = 2.0 * 1000.0 / (30.0 / 3.6);
        let expected = beacon_count(1.0, traversal);
        assert_eq!(expected, 241);
        assert_eq!(out.events.beacon_tx, expected);
        assert_eq!(out.metrics.sent, expected);
        assert_eq!(out.beacons.len() as u64, expected);
        assert!(out.metrics.conserves_frames());
    }

    #[test]
    fn wize_latency_is_deterministic() {
        let s = wize(6400.0, 50.0);
        let out = run_scenario(&s, 3).unwrap();
        let want = radio::airtime(&s.radio.profile, 108) + s.radio.latency.fixed_overhead;
        assert!((want - 0.1475).abs() < 1e-12);
        assert!(!out.metrics.latencies.is_empty());
        for l in &out.metrics.latencies {
            assert!((l - want).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_output() {
        let mut s = Scenario::with_defaults(Technology::Ble5, 0.0).unwrap();
        s.speed_kmh = 50.0;
        assert_eq!(run_scenario(&s, 2).unwrap(), run_scenario(&s, 2).unwrap());
        assert_ne!(run_scenario(&s, 2).unwrap().beacons, run_scenario(&s, 3).unwrap().beacons);
    }

    #[test]
    fn wrong_group_filters_every_arrival() {
        let mut s = Scenario::with_defaults(Technology::Ble5, 0.0).unwrap();
        s.mobile_group = 9;
        let out = run_scenario(&s, 0).unwrap();
        assert_eq!(out.metrics.received, 0);
        assert!(out.metrics.filtered > 0);
        assert!(out.metrics.conserves_frames());
        assert!(out.beacons.iter().all(|b| b.outcome != BeaconOutcome::Received));
    }

    #[test]
    fn wrong_rate_filters_every_arrival() {
        let mut s = wize(2400.0, 30.0);
        s.mobile_data_rate = Some(6400.0);
        let out = run_scenario(&s, 0).unwrap();
        assert_eq!(out.metrics.received, 0);
        assert_eq!(out.metrics.filtered + out.metrics.radio_lost, out.metrics.sent);
    }

    #[test]
    fn records_reach_the_dht_on_return() {
        let s = wize(2400.0, 50.0);
        let out = run_scenario(&s, 0).unwrap();
        let traj = s.trajectory().unwrap();
        let gw = RsuPlacement {
            position: s.gateways[0],
            lateral_offset: 0.0,
        };
        let windows = contact_intervals(&traj, &gw, s.gateway_range);
        assert_eq!(windows.len(), 2);
        // records heard after leaving the gateway go up the moment it is back in range
        let back = out.syncs.iter().find(|e| e.at > windows[0].end).unwrap();
        assert_eq!(back.at, windows[1].start);
        assert_eq!(out.unsynced_at_end, 0);
        assert_eq!(out.metrics.synced, out.metrics.received);
        assert_eq!(out.metrics.dht_drops, 0);
        assert_eq!(out.dht.len() as u64, out.metrics.received);
        assert!(out.peers_known >= 2);

        // every stored value decodes back to a received beacon
        let mut dht = Dht::new(s.replication_factor);
        dht.add_gateway(s.gateway_id(0));
        for e in &out.dht {
            let rec = IdentificationRecord::decode(&e.value).unwrap();
            assert_eq!(e.key, DhtKey::for_record(rec.beacon_id, rec.seq));
            assert_eq!(out.beacons[rec.seq as usize].outcome, BeaconOutcome::Received);
        }
        assert_eq!(dht.dht_get(DhtKey(0), SimTime::ZERO), DhtLookup::NeverStored);
    }

    #[test]
    fn short_ttl_drops_old_records() {
        let mut s = wize(2400.0, 30.0);
        s.ttl = 20.0;
        let out = run_scenario(&s, 0).unwrap();
        assert!(out.metrics.dht_drops > 0);
        assert_eq!(out.metrics.synced + out.metrics.dht_drops, out.metrics.received);
    }

    #[test]
    fn no_gateway_keeps_everything_on_board() {
        let mut s = wize(6400.0, 70.0);
        s.gateways.clear();
        let out = run_scenario(&s, 0).unwrap();
        assert!(out.dht.is_empty());
        assert_eq!(out.unsynced_at_end as u64, out.metrics.received);
    }

    #[test]
    fn disruption_window_silences_ble() {
        let mut s = Scenario::with_defaults(Technology::Ble5, 0.0).unwrap();
        s.radio.link.disruption_windows.push(radio::DisruptionWindow {
            start: 10.0,
            end: 20.0,
        });
        let out = run_scenario(&s, 0).unwrap();
        for b in &out.beacons[10..=20] {
            assert_eq!(b.outcome, BeaconOutcome::RadioLost);
        }
    }

    #[test]
    fn invalid_scenario_is_rejected() {
        let mut s = wize(2400.0, 30.0);
        s.speed_kmh = 0.0;
        assert!(matches!(run_scenario(&s, 0), Err(SimError::Scenario(e)) if e.field == "speed"));
    }

    #[test]
    fn home_is_point_a() {
        let s = wize(2400.0, 30.0);
        assert_eq!(home(&s), s.geometry.point_a);
    }
}
