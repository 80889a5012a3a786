//! Assisted-RFID beacon protocol: the RSU broadcasts its identification
//! periodically; the vehicle node filters, deduplicates and stores what it hears.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use crate::engine::{EngineError, EventId, EventQueue, RngStream, SimTime};
use crate::radio::{self, LatencyModelParams, LinkModelParams, RadioError, RadioProfile, Reception, Technology};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BeaconError {
    #[error("beacon period must be positive, got {0} s")]
    NonPositivePeriod(f64),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Radio(#[from] RadioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupId(pub u32);

/// Who a frame is for. BLE mesh frames are published to a group; Wize frames
/// reach whoever is tuned to the same carrier and rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Addressing {
    Mesh(GroupId),
    Channel { carrier_hz: f64, data_rate_bps: f64 },
}

impl Addressing {
    pub fn for_profile(profile: &RadioProfile, group: GroupId) -> Self {
        match profile.technology {
            Technology::Ble5 => Addressing::Mesh(group),
            Technology::Wize => Addressing::Channel {
                carrier_hz: profile.carrier_frequency_hz,
                data_rate_bps: profile.data_rate_bps,
            },
        }
    }
}

/// Publish/subscribe group shared by the RSU and the vehicle node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeshGroup {
    pub group_id: Option<GroupId>,
    pub members: BTreeSet<NodeId>,
}

impl MeshGroup {
    pub fn new(group_id: GroupId) -> Self {
        MeshGroup {
            group_id: Some(group_id),
            members: BTreeSet::new(),
        }
    }

    pub fn join(&mut self, node: NodeId) {
        self.members.insert(node);
    }

    pub fn shares(&self, a: NodeId, b: NodeId) -> bool {
        self.members.contains(&a) && self.members.contains(&b)
    }
}

/// One beacon transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub beacon_id: NodeId,
    pub seq: u64,
    pub tx_time: SimTime,
    pub payload_bytes: usize,
    pub technology: Technology,
    pub addressing: Addressing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentificationRecord {
    pub beacon_id: NodeId,
    pub seq: u64,
    pub rx_time: SimTime,
    /// `rx_time - tx_time`, seconds.
    pub latency: f64,
}

impl IdentificationRecord {
    pub const ENCODED_LEN: usize = 32;

    /// Little-endian `beacon_id, seq, rx_time bits, latency bits`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::ENCODED_LEN);
        out.extend_from_slice(&self.beacon_id.0.to_le_bytes());
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&self.rx_time.secs().to_bits().to_le_bytes());
        out.extend_from_slice(&self.latency.to_bits().to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != Self::ENCODED_LEN {
            return None;
        }
        let word = |i: usize| {
            let mut b = [0u8; 8];
            b.copy_from_slice(&bytes[i * 8..i * 8 + 8]);
            u64::from_le_bytes(b)
        };
        Some(IdentificationRecord {
            beacon_id: NodeId(word(0)),
            seq: word(1),
            rx_time: SimTime::new(f64::from_bits(word(2))).ok()?,
            latency: f64::from_bits(word(3)),
        })
    }
}

/// Radio profile plus the link and latency models it is simulated with.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioSetup {
    pub profile: RadioProfile,
    pub link: LinkModelParams,
    pub latency: LatencyModelParams,
}

impl RadioSetup {
    pub fn validate(&self) -> Result<(), RadioError> {
        self.profile.validate()?;
        self.link.validate()?;
        self.latency.validate()?;
        if self.latency.applies_to != self.profile.technology {
            return Err(RadioError::TechnologyMismatch {
                model: self.latency.applies_to,
                frame: self.profile.technology,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TxOutcome {
    Lost(Frame),
    Arrives { frame: Frame, at: SimTime },
}

/// Slack for schedule comparisons, so a run length that is a whole number of
/// periods up to rounding still gets its last beacon.
pub const SCHEDULE_EPS: f64 = 1e-9;

/// Number of beacons an RSU sends in `[0, run_length]`.
pub fn beacon_count(period: f64, run_length: f64) -> u64 {
    libm::floor(run_length / period + SCHEDULE_EPS) as u64 + 1
}

/// Roadside unit broadcasting fire-and-forget identification beacons.
#[derive(Debug, Clone, PartialEq)]
pub struct Rsu {
    pub id: NodeId,
    period: f64,
    next_seq: u64,
    pub addressing: Addressing,
    pub payload_bytes: usize,
    pub sent: u64,
    pub radio_lost: u64,
}

impl Rsu {
    pub fn new(id: NodeId, period: f64, addressing: Addressing, payload_bytes: usize) -> Result<Self, BeaconError> {
        if !(period.is_finite() && period > 0.0) {
            return Err(BeaconError::NonPositivePeriod(period));
        }
        Ok(Rsu {
            id,
            period,
            next_seq: 0,
            addressing,
            payload_bytes,
            sent: 0,
            radio_lost: 0,
        })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Schedules the first beacon at the queue's current time.
    pub fn start<K>(&self, queue: &mut EventQueue<K>, beacon_tx: K) -> Result<EventId, BeaconError> {
        Ok(queue.schedule(queue.now(), beacon_tx)?)
    }

    /// Time of the beacon after the one sent at `now`, if it still falls before `run_end`.
    pub fn next_tx(&self, now: SimTime, run_end: SimTime) -> Option<SimTime> {
        // multiply rather than accumulate so the schedule does not drift
        let t = SimTime::from_secs(self.next_seq as f64 * self.period);
        debug_assert!(t >= now);
        (t.secs() <= run_end.secs() + SCHEDULE_EPS * self.period).then_some(t)
    }

    fn emit(&mut self, now: SimTime, technology: Technology) -> Frame {
        let frame = Frame {
            beacon_id: self.id,
            seq: self.next_seq,
            tx_time: now,
            payload_bytes: self.payload_bytes,
            technology,
            addressing: self.addressing,
        };
        self.next_seq += 1;
        self.sent += 1;
        frame
    }

    /// Sends one beacon to a receiver described by `rx` (distance, speed).
    ///
    /// The shadowing draw comes from `loss_rng`, the BLE rendezvous draw from
    /// `latency_rng`. Distances under the 1 m reference are clamped to it.
    pub fn on_beacon_tx(
        &mut self,
        now: SimTime,
        radio: &RadioSetup,
        rx: Reception,
        loss_rng: &mut RngStream,
        latency_rng: &mut RngStream,
    ) -> Result<TxOutcome, BeaconError> {
        let frame = self.emit(now, radio.profile.technology);
        let rx = Reception {
            distance_m: rx.distance_m.max(1.0),
            at: now,
            frame_bytes: frame.payload_bytes,
            ..rx
        };
        if radio::reception_decision(&radio.profile, &radio.link, &rx, loss_rng)? {
            let latency = radio::end_to_end_latency(&radio.profile, &radio.latency, frame.payload_bytes, latency_rng)?;
            Ok(TxOutcome::Arrives { frame, at: now + latency })
        } else {
            self.radio_lost += 1;
            Ok(TxOutcome::Lost(frame))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrivalOutcome {
    Stored(IdentificationRecord),
    Duplicate,
    Filtered,
}

/// Vehicle-side node: keeps every unique identification it hears.
#[derive(Debug, Clone, PartialEq)]
pub struct MobileNode {
    pub id: NodeId,
    listen: Addressing,
    seen: BTreeSet<(NodeId, u64)>,
    records: Vec<IdentificationRecord>,
    processed_upto: usize,
    synced: usize,
    expired: usize,
    pub filtered: u64,
    pub duplicates: u64,
}

impl MobileNode {
    pub fn new(id: NodeId, listen: Addressing) -> Self {
        MobileNode {
            id,
            listen,
            seen: BTreeSet::new(),
            records: Vec::new(),
            processed_upto: 0,
            synced: 0,
            expired: 0,
            filtered: 0,
            duplicates: 0,
        }
    }

    pub fn accepts(&self, frame: &Frame) -> bool {
        match (self.listen, frame.addressing) {
            (Addressing::Mesh(mine), Addressing::Mesh(theirs)) => mine == theirs,
            (
                Addressing::Channel { carrier_hz: c0, data_rate_bps: r0 },
                Addressing::Channel { carrier_hz: c1, data_rate_bps: r1 },
            ) => c0 == c1 && r0 == r1,
            _ => false,
        }
    }

    pub fn on_frame_arrival(&mut self, frame: &Frame, now: SimTime) -> ArrivalOutcome {
        if !self.accepts(frame) {
            self.filtered += 1;
            return ArrivalOutcome::Filtered;
        }
        if !self.seen.insert((frame.beacon_id, frame.seq)) {
            self.duplicates += 1;
            return ArrivalOutcome::Duplicate;
        }
        let record = IdentificationRecord {
            beacon_id: frame.beacon_id,
            seq: frame.seq,
            rx_time: now,
            latency: now - frame.tx_time,
        };
        self.records.push(record);
        ArrivalOutcome::Stored(record)
    }

    /// All stored records in arrival order.
    pub fn records(&self) -> &[IdentificationRecord] {
        &self.records
    }

    /// Records not yet handed to the gateway layer, oldest first.
    pub fn unsynced(&self) -> &[IdentificationRecord] {
        &self.records[self.processed_upto..]
    }

    pub fn synced_count(&self) -> usize {
        self.synced
    }

    /// Records given up on because they outlived the carry TTL.
    pub fn expired_count(&self) -> usize {
        self.expired
    }

    pub(crate) fn mark_processed(&mut self, synced: bool) {
        if self.processed_upto < self.records.len() {
            self.processed_upto += 1;
            if synced {
                self.synced += 1;
            } else {
                self.expired += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::{DisruptionWindow, WIZE_FOURGFSK_PENALTY_DB};

    fn ble_setup() -> RadioSetup {
        let mut link = LinkModelParams::ble5();
        link.shadowing_sigma_db = 0.0;
        RadioSetup {
            profile: RadioProfile::ble5(),
            link,
            latency: LatencyModelParams::ble5(),
        }
    }

    fn rngs() -> (RngStream, RngStream) {
        (RngStream::new(9, "radio-loss"), RngStream::new(9, "ble-latency"))
    }

    fn frame(seq: u64, tx: f64, addressing: Addressing) -> Frame {
        Frame {
            beacon_id: NodeId(1),
            seq,
            tx_time: SimTime::from_secs(tx),
            payload_bytes: 108,
            technology: Technology::Wize,
            addressing,
        }
    }

    #[test]
    fn beacon_counts() {
        assert_eq!(beacon_count(1.0, 240.0), 241);
        assert_eq!(beacon_count(500.0, 240.0), 1);
        assert!(Rsu::new(NodeId(1), 0.0, Addressing::Mesh(GroupId(1)), 108).is_err());
        assert!(Rsu::new(NodeId(1), -1.0, Addressing::Mesh(GroupId(1)), 108).is_err());
    }

    #[test]
    fn periodic_schedule_covers_run() {
        let mut rsu = Rsu::new(NodeId(1), 1.0, Addressing::Mesh(GroupId(1)), 108).unwrap();
        let setup = ble_setup();
        let (mut a, mut b) = rngs();
        let mut q = EventQueue::new();
        rsu.start(&mut q, ()).unwrap();
        let end = SimTime::from_secs(240.0);
        q.run_until(end, |q, _| {
            let now = q.now();
            rsu.on_beacon_tx(now, &setup, Reception::at_rest(10.0, now), &mut a, &mut b)
                .unwrap();
            if let Some(t) = rsu.next_tx(now, end) {
                q.schedule(t, ()).unwrap();
            }
        })
        .unwrap();
        assert_eq!(rsu.sent, 241);
    }

    #[test]
    fn out_of_range_counts_loss() {
        let mut rsu = Rsu::new(NodeId(1), 1.0, Addressing::Mesh(GroupId(1)), 108).unwrap();
        let (mut a, mut b) = rngs();
        let out = rsu
            .on_beacon_tx(SimTime::ZERO, &ble_setup(), Reception::at_rest(5000.0, SimTime::ZERO), &mut a, &mut b)
            .unwrap();
        assert!(matches!(out, TxOutcome::Lost(_)));
        assert_eq!((rsu.sent, rsu.radio_lost), (1, 1));
    }

    #[test]
    fn at_rsu_position_arrives() {
        let mut rsu = Rsu::new(NodeId(1), 1.0, Addressing::Mesh(GroupId(1)), 108).unwrap();
        let (mut a, mut b) = rngs();
        let now = SimTime::from_secs(3.0);
        let out = rsu
            .on_beacon_tx(now, &ble_setup(), Reception::at_rest(0.0, now), &mut a, &mut b)
            .unwrap();
        match out {
            TxOutcome::Arrives { frame, at } => {
                assert_eq!(frame.seq, 0);
                assert!(at > now);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(rsu.radio_lost, 0);
    }

    #[test]
    fn disruption_drops_in_range_frame() {
        let mut setup = ble_setup();
        setup.link.disruption_windows.push(DisruptionWindow { start: 0.0, end: 5.0 });
        let mut rsu = Rsu::new(NodeId(1), 1.0, Addressing::Mesh(GroupId(1)), 108).unwrap();
        let (mut a, mut b) = rngs();
        let out = rsu
            .on_beacon_tx(SimTime::from_secs(2.0), &setup, Reception::at_rest(5.0, SimTime::ZERO), &mut a, &mut b)
            .unwrap();
        assert!(matches!(out, TxOutcome::Lost(_)));
    }

    #[test]
    fn latency_is_rx_minus_tx() {
        let profile = RadioProfile::wize(2400.0, WIZE_FOURGFSK_PENALTY_DB).unwrap();
        let addr = Addressing::for_profile(&profile, GroupId(0));
        let mut node = MobileNode::new(NodeId(2), addr);
        let out = node.on_frame_arrival(&frame(0, 10.0, addr), SimTime::from_secs(10.380));
        match out {
            ArrivalOutcome::Stored(r) => assert!((r.latency - 0.380).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicates_are_ignored() {
        let addr = Addressing::Mesh(GroupId(4));
        let mut node = MobileNode::new(NodeId(2), addr);
        node.on_frame_arrival(&frame(3, 1.0, addr), SimTime::from_secs(1.7));
        let before = node.clone().records().to_vec();
        assert_eq!(
            node.on_frame_arrival(&frame(3, 1.0, addr), SimTime::from_secs(1.9)),
            ArrivalOutcome::Duplicate
        );
        assert_eq!(node.records(), &before[..]);
    }

    #[test]
    fn foreign_group_is_filtered() {
        let mut node = MobileNode::new(NodeId(2), Addressing::Mesh(GroupId(1)));
        let out = node.on_frame_arrival(&frame(0, 1.0, Addressing::Mesh(GroupId(2))), SimTime::from_secs(1.5));
        assert_eq!(out, ArrivalOutcome::Filtered);
        assert_eq!(node.filtered, 1);
        assert!(node.records().is_empty());
    }

    #[test]
    fn wize_rate_mismatch_is_filtered() {
        let slow = RadioProfile::wize(2400.0, 3.0).unwrap();
        let fast = RadioProfile::wize(6400.0, 3.0).unwrap();
        let mut node = MobileNode::new(NodeId(2), Addressing::for_profile(&slow, GroupId(0)));
        let f = frame(0, 0.0, Addressing::for_profile(&fast, GroupId(0)));
        assert_eq!(node.on_frame_arrival(&f, SimTime::from_secs(0.2)), ArrivalOutcome::Filtered);
    }

    #[test]
    fn mesh_group_membership() {
        let mut g = MeshGroup::new(GroupId(7));
        g.join(NodeId(1));
        assert!(!g.shares(NodeId(1), NodeId(2)));
        g.join(NodeId(2));
        assert!(g.shares(NodeId(1), NodeId(2)));
    }

    #[test]
    fn record_codec_round_trips() {
        let r = IdentificationRecord {
            beacon_id: NodeId(0xdead_beef),
            seq: 42,
            rx_time: SimTime::from_secs(12.5),
            latency: 0.716,
        };
        let bytes = r.encode();
        assert_eq!(bytes.len(), IdentificationRecord::ENCODED_LEN);
        assert_eq!(IdentificationRecord::decode(&bytes), Some(r));
        assert_eq!(IdentificationRecord::decode(&bytes[1..]), None);
    }
}
