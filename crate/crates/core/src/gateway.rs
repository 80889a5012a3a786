//! Smart-gateway layer: peer discovery, peer routing, store-carry-forward data
//! routing and a DHT replicated across gateways.
//!
//! Every state change here is driven by an explicit contact or timer call;
//! nothing reads global state. Reachability is whatever the caller's contact
//! predicate says at that instant.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::beacon::{MobileNode, NodeId};
use crate::engine::{stable_hash64, SimTime};

pub const DEFAULT_TTL: f64 = 300.0;
pub const DEFAULT_REPLICATION: usize = 2;
pub const DEFAULT_PENDING_CAPACITY: usize = 4096;
/// Relays a message may pass through before it is dropped.
pub const MAX_HOPS: u32 = 32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("message payload is empty")]
    EmptyMessage,
    #[error("no gateway is reachable")]
    NoReachableGateway,
    #[error("gateway {0} is not part of the DHT")]
    UnknownGateway(NodeId),
    #[error("gateway {0} is unreachable")]
    GatewayUnreachable(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Layer {
    Iot,
    Gateway,
    Cloud,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeerRecord {
    pub peer_id: NodeId,
    /// Opaque transport addresses.
    pub addresses: Vec<String>,
    pub layer: Layer,
    pub last_seen: SimTime,
}

impl PeerRecord {
    pub fn new(peer_id: NodeId, layer: Layer, last_seen: SimTime) -> Self {
        PeerRecord {
            peer_id,
            addresses: Vec::new(),
            layer,
            last_seen,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub id: u64,
    pub source: NodeId,
    pub dest: NodeId,
    pub payload: Vec<u8>,
    pub created_at: SimTime,
    pub expires_at: SimTime,
    pub hops: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    Ttl,
    Capacity,
    HopLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteOutcome {
    DeliveredDirect,
    Forwarded(NodeId),
    StoredPending,
    Dropped(DropReason),
}

/// A message leaving a node, for the caller's transport to carry.
#[derive(Debug, Clone, PartialEq)]
pub struct Transfer {
    pub to: NodeId,
    pub message: Message,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RouteCounters {
    /// Injected here or received for relay.
    pub accepted: u64,
    /// Reached this node as final destination.
    pub delivered_here: u64,
    pub handed_off: u64,
    pub dropped_ttl: u64,
    pub dropped_capacity: u64,
    pub dropped_hops: u64,
}

impl RouteCounters {
    pub fn dropped(&self) -> u64 {
        self.dropped_ttl + self.dropped_capacity + self.dropped_hops
    }
}

/// Peer table, next-hop routes and the store-carry-forward queue of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTable {
    owner: NodeId,
    layer: Layer,
    peers: BTreeMap<NodeId, PeerRecord>,
    routes: BTreeMap<NodeId, NodeId>,
    pending: VecDeque<Message>,
    outbox: Vec<Transfer>,
    pub pending_capacity: usize,
    pub default_ttl: f64,
    next_message: u64,
    counters: RouteCounters,
}

impl RoutingTable {
    pub fn new(owner: NodeId, layer: Layer) -> Self {
        RoutingTable {
            owner,
            layer,
            peers: BTreeMap::new(),
            routes: BTreeMap::new(),
            pending: VecDeque::new(),
            outbox: Vec::new(),
            pending_capacity: DEFAULT_PENDING_CAPACITY,
            default_ttl: DEFAULT_TTL,
            next_message: 0,
            counters: RouteCounters::default(),
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn layer(&self) -> Layer {
        self.layer
    }

    pub fn self_record(&self, now: SimTime) -> PeerRecord {
        PeerRecord::new(self.owner, self.layer, now)
    }

    pub fn peer(&self, id: NodeId) -> Option<&PeerRecord> {
        self.peers.get(&id)
    }

    pub fn known_peers(&self) -> Vec<PeerRecord> {
        self.peers.values().cloned().collect()
    }

    pub fn known_ids(&self) -> BTreeSet<NodeId> {
        self.peers.keys().copied().collect()
    }

    pub fn next_hop(&self, dest: NodeId) -> Option<NodeId> {
        self.routes.get(&dest).copied()
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn counters(&self) -> RouteCounters {
        self.counters
    }

    pub fn take_outbox(&mut self) -> Vec<Transfer> {
        core::mem::take(&mut self.outbox)
    }

    fn upsert(&mut self, rec: &PeerRecord) -> bool {
        match self.peers.get_mut(&rec.peer_id) {
            Some(known) => {
                if rec.last_seen > known.last_seen {
                    known.last_seen = rec.last_seen;
                }
                for addr in &rec.addresses {
                    if !known.addresses.contains(addr) {
                        known.addresses.push(addr.clone());
                    }
                }
                false
            }
            None => {
                self.peers.insert(rec.peer_id, rec.clone());
                true
            }
        }
    }

    /// Merges what an encountered peer knows. The encountered peer itself is
    /// recorded (and becomes a direct route) but is not part of the returned
    /// count, which only covers previously unknown peers from `their_known`.
    pub fn discover_peers(&mut self, encountered: &PeerRecord, their_known: &[PeerRecord]) -> usize {
        if encountered.peer_id == self.owner {
            return 0;
        }
        self.upsert(encountered);
        self.routes.insert(encountered.peer_id, encountered.peer_id);
        let mut learned = 0;
        for rec in their_known {
            if rec.peer_id == self.owner || rec.peer_id == encountered.peer_id {
                continue;
            }
            if self.upsert(rec) {
                self.routes.insert(rec.peer_id, encountered.peer_id);
                learned += 1;
            }
        }
        learned
    }

    fn may_contact(&self, peer: NodeId) -> bool {
        // the cloud only talks to gateways
        let cloud = |id: NodeId| self.peers.get(&id).is_some_and(|p| p.layer == Layer::Cloud);
        !(cloud(peer) && self.layer != Layer::Gateway)
    }

    fn pick_next_hop(&self, dest: NodeId, in_contact: &dyn Fn(NodeId) -> bool) -> Option<NodeId> {
        if let Some(&hop) = self.routes.get(&dest) {
            if hop != self.owner && hop != dest && in_contact(hop) && self.may_contact(hop) {
                return Some(hop);
            }
        }
        // last resort towards the cloud: any gateway in reach
        let dest_is_cloud = self.peers.get(&dest).is_some_and(|p| p.layer == Layer::Cloud);
        if dest_is_cloud && self.layer != Layer::Gateway {
            return self
                .peers
                .values()
                .find(|p| p.layer == Layer::Gateway && in_contact(p.peer_id))
                .map(|p| p.peer_id);
        }
        None
    }

    fn dispatch(&mut self, msg: Message, now: SimTime, in_contact: &dyn Fn(NodeId) -> bool, queue: bool) -> RouteOutcome {
        if msg.expires_at <= now {
            self.counters.dropped_ttl += 1;
            return RouteOutcome::Dropped(DropReason::Ttl);
        }
        if msg.dest != self.owner && in_contact(msg.dest) && self.may_contact(msg.dest) {
            self.counters.handed_off += 1;
            self.outbox.push(Transfer { to: msg.dest, message: msg });
            return RouteOutcome::DeliveredDirect;
        }
        if let Some(hop) = self.pick_next_hop(msg.dest, in_contact) {
            if msg.hops >= MAX_HOPS {
                self.counters.dropped_hops += 1;
                return RouteOutcome::Dropped(DropReason::HopLimit);
            }
            self.counters.handed_off += 1;
            self.outbox.push(Transfer { to: hop, message: msg });
            return RouteOutcome::Forwarded(hop);
        }
        if !queue {
            self.pending.push_back(msg);
            return RouteOutcome::StoredPending;
        }
        if self.pending.len() >= self.pending_capacity {
            self.counters.dropped_capacity += 1;
            return RouteOutcome::Dropped(DropReason::Capacity);
        }
        self.pending.push_back(msg);
        RouteOutcome::StoredPending
    }

    /// Injects a new message from this node.
    pub fn route_message(
        &mut self,
        dest: NodeId,
        payload: Vec<u8>,
        now: SimTime,
        in_contact: &dyn Fn(NodeId) -> bool,
    ) -> Result<RouteOutcome, GatewayError> {
        if payload.is_empty() {
            return Err(GatewayError::EmptyMessage);
        }
        let msg = Message {
            id: stable_hash64(&[&self.owner.0.to_le_bytes(), &self.next_message.to_le_bytes()]),
            source: self.owner,
            dest,
            payload,
            created_at: now,
            expires_at: now + self.default_ttl,
            hops: 0,
        };
        self.next_message += 1;
        self.counters.accepted += 1;
        Ok(self.dispatch(msg, now, in_contact, true))
    }

    /// Takes over a message handed to us by another node.
    pub fn receive(&mut self, mut msg: Message, now: SimTime, in_contact: &dyn Fn(NodeId) -> bool) -> RouteOutcome {
        self.counters.accepted += 1;
        if msg.dest == self.owner {
            self.counters.delivered_here += 1;
            return RouteOutcome::DeliveredDirect;
        }
        msg.hops += 1;
        self.dispatch(msg, now, in_contact, true)
    }

    /// Drops every pending message whose TTL has run out. Returns how many.
    pub fn expire(&mut self, now: SimTime) -> usize {
        let before = self.pending.len();
        self.pending.retain(|m| m.expires_at > now);
        let dropped = before - self.pending.len();
        self.counters.dropped_ttl += dropped as u64;
        dropped
    }

    pub fn next_expiry(&self) -> Option<SimTime> {
        self.pending.iter().map(|m| m.expires_at).min()
    }

    /// Retries the pending queue after the contact set changed. Returns the
    /// number of messages that left the queue towards a peer.
    pub fn on_contact(&mut self, now: SimTime, in_contact: &dyn Fn(NodeId) -> bool) -> usize {
        self.expire(now);
        let queued = core::mem::take(&mut self.pending);
        let mut moved = 0;
        for msg in queued {
            match self.dispatch(msg, now, in_contact, false) {
                RouteOutcome::DeliveredDirect | RouteOutcome::Forwarded(_) => moved += 1,
                _ => {}
            }
        }
        moved
    }

    /// `accepted == delivered_here + handed_off + dropped + pending`.
    pub fn balanced(&self) -> bool {
        let c = self.counters;
        c.accepted == c.delivered_here + c.handed_off + c.dropped() + self.pending.len() as u64
    }
}

/// Undirected contact graph at one instant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContactGraph {
    edges: BTreeSet<(NodeId, NodeId)>,
}

impl ContactGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn connect(&mut self, a: NodeId, b: NodeId) {
        if a != b {
            self.edges.insert((a.min(b), a.max(b)));
        }
    }

    pub fn connected(&self, a: NodeId, b: NodeId) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.iter().copied()
    }
}

/// One synchronous discovery round: every contact pair swaps the peer lists
/// they held at the start of the round. Returns the total learned.
pub fn exchange_round(tables: &mut BTreeMap<NodeId, RoutingTable>, contacts: &ContactGraph, now: SimTime) -> usize {
    let snapshot: BTreeMap<NodeId, (PeerRecord, Vec<PeerRecord>)> = tables
        .iter()
        .map(|(id, t)| (*id, (t.self_record(now), t.known_peers())))
        .collect();
    let mut learned = 0;
    for (a, b) in contacts.edges() {
        for (me, other) in [(a, b), (b, a)] {
            if let (Some((rec, known)), Some(table)) = (snapshot.get(&other), tables.get_mut(&me)) {
                learned += table.discover_peers(rec, known);
            }
        }
    }
    learned
}

/// Several routing tables joined by a contact graph; carries transfers
/// between them so end-to-end accounting can be checked.
#[derive(Debug, Clone, Default)]
pub struct ForwardNetwork {
    pub tables: BTreeMap<NodeId, RoutingTable>,
    pub injected: u64,
    pub delivered: Vec<(u64, SimTime)>,
}

impl ForwardNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, table: RoutingTable) {
        self.tables.insert(table.owner(), table);
    }

    pub fn inject(
        &mut self,
        source: NodeId,
        dest: NodeId,
        payload: Vec<u8>,
        now: SimTime,
        contacts: &ContactGraph,
    ) -> Result<RouteOutcome, GatewayError> {
        let table = self
            .tables
            .get_mut(&source)
            .ok_or(GatewayError::UnknownGateway(source))?;
        let outcome = table.route_message(dest, payload, now, &|p| contacts.connected(source, p))?;
        self.injected += 1;
        self.pump(now, contacts);
        Ok(outcome)
    }

    /// Lets every node retry its queue against the current contacts.
    pub fn contact_round(&mut self, now: SimTime, contacts: &ContactGraph) {
        let ids: Vec<NodeId> = self.tables.keys().copied().collect();
        for id in ids {
            if let Some(t) = self.tables.get_mut(&id) {
                t.on_contact(now, &|p| contacts.connected(id, p));
            }
        }
        self.pump(now, contacts);
    }

    fn pump(&mut self, now: SimTime, contacts: &ContactGraph) {
        loop {
            let mut transfers = Vec::new();
            for t in self.tables.values_mut() {
                transfers.extend(t.take_outbox());
            }
            if transfers.is_empty() {
                break;
            }
            for Transfer { to, message } in transfers {
                let id = message.id;
                let final_hop = message.dest == to;
                match self.tables.get_mut(&to) {
                    Some(t) => {
                        t.receive(message, now, &|p| contacts.connected(to, p));
                        if final_hop {
                            self.delivered.push((id, now));
                        }
                    }
                    // destination outside the modeled set: count it as delivered
                    None => self.delivered.push((id, now)),
                }
            }
        }
    }

    pub fn dropped(&self) -> u64 {
        self.tables.values().map(|t| t.counters().dropped()).sum()
    }

    pub fn pending(&self) -> u64 {
        self.tables.values().map(|t| t.pending() as u64).sum()
    }
}

/// 64-bit DHT key; distance is XOR against gateway ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DhtKey(pub u64);

impl DhtKey {
    pub fn for_record(beacon_id: NodeId, seq: u64) -> Self {
        DhtKey(stable_hash64(&[b"dht-key", &beacon_id.0.to_le_bytes(), &seq.to_le_bytes()]))
    }
}

impl fmt::Display for DhtKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredValue {
    pub value: Vec<u8>,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DhtEntry {
    pub key: DhtKey,
    pub value: Vec<u8>,
    pub stored_at: BTreeSet<NodeId>,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DhtLookup {
    Found(StoredValue),
    /// Some of the key's home gateways are unreachable and the reachable ones do not hold it.
    Unavailable,
    NeverStored,
}

/// Highest version wins; equal versions go to the first holder in id order.
pub fn pick_latest<'a, I>(candidates: I) -> Option<&'a StoredValue>
where
    I: IntoIterator<Item = (NodeId, &'a StoredValue)>,
{
    candidates
        .into_iter()
        .max_by(|(ia, a), (ib, b)| a.version.cmp(&b.version).then(ib.cmp(ia)))
        .map(|(_, v)| v)
}

/// Gateways ordered by XOR distance to `key` (ties by id).
pub fn xor_closest(key: DhtKey, ids: impl IntoIterator<Item = NodeId>, k: usize) -> Vec<NodeId> {
    let mut ids: Vec<NodeId> = ids.into_iter().collect();
    ids.sort_by_key(|id| (id.0 ^ key.0, id.0));
    ids.truncate(k);
    ids
}

/// Key/value store replicated on the `replication_factor` XOR-closest reachable gateways.
#[derive(Debug, Clone, PartialEq)]
pub struct Dht {
    pub replication_factor: usize,
    stores: BTreeMap<NodeId, BTreeMap<DhtKey, StoredValue>>,
    unreachable: BTreeSet<NodeId>,
}

impl Dht {
    pub fn new(replication_factor: usize) -> Self {
        Dht {
            replication_factor: replication_factor.max(1),
            stores: BTreeMap::new(),
            unreachable: BTreeSet::new(),
        }
    }

    pub fn add_gateway(&mut self, id: NodeId) {
        self.stores.entry(id).or_default();
    }

    pub fn gateways(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.stores.keys().copied()
    }

    pub fn contains_gateway(&self, id: NodeId) -> bool {
        self.stores.contains_key(&id)
    }

    pub fn set_reachable(&mut self, id: NodeId, reachable: bool) {
        if reachable {
            self.unreachable.remove(&id);
        } else {
            self.unreachable.insert(id);
        }
    }

    pub fn is_reachable(&self, id: NodeId) -> bool {
        self.stores.contains_key(&id) && !self.unreachable.contains(&id)
    }

    fn reachable(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.stores.keys().copied().filter(|id| !self.unreachable.contains(id))
    }

    /// Where a put for `key` would land right now.
    pub fn placement(&self, key: DhtKey) -> Vec<NodeId> {
        xor_closest(key, self.reachable(), self.replication_factor)
    }

    fn latest_on(&self, key: DhtKey, holders: &[NodeId]) -> Option<&StoredValue> {
        pick_latest(
            holders
                .iter()
                .filter_map(|id| self.stores.get(id)?.get(&key).map(|v| (*id, v))),
        )
    }

    /// Stores `value` with a version one above the newest copy visible now.
    pub fn dht_put(&mut self, key: DhtKey, value: Vec<u8>, now: SimTime) -> Result<BTreeSet<NodeId>, GatewayError> {
        let targets = self.placement(key);
        let version = self.latest_on(key, &targets).map_or(1, |v| v.version + 1);
        self.put_versioned(key, value, version, now)
    }

    /// Writes an explicit version, as a concurrent writer would.
    pub fn put_versioned(
        &mut self,
        key: DhtKey,
        value: Vec<u8>,
        version: u64,
        _now: SimTime,
    ) -> Result<BTreeSet<NodeId>, GatewayError> {
        let targets = self.placement(key);
        if targets.is_empty() {
            return Err(GatewayError::NoReachableGateway);
        }
        for id in &targets {
            let store = self.stores.entry(*id).or_default();
            let newer = store.get(&key).is_none_or(|old| old.version <= version);
            if newer {
                store.insert(
                    key,
                    StoredValue {
                        value: value.clone(),
                        version,
                    },
                );
            }
        }
        Ok(targets.into_iter().collect())
    }

    pub fn dht_get(&self, key: DhtKey, _now: SimTime) -> DhtLookup {
        let queried = self.placement(key);
        if let Some(v) = self.latest_on(key, &queried) {
            return DhtLookup::Found(v.clone());
        }
        let home = xor_closest(key, self.stores.keys().copied(), self.replication_factor);
        if home.iter().any(|id| self.unreachable.contains(id)) {
            DhtLookup::Unavailable
        } else {
            DhtLookup::NeverStored
        }
    }

    /// Every key with its newest version and the gateways holding that version.
    pub fn entries(&self) -> Vec<DhtEntry> {
        let mut merged: BTreeMap<DhtKey, DhtEntry> = BTreeMap::new();
        for (gw, store) in &self.stores {
            for (key, v) in store {
                let e = merged.entry(*key).or_insert_with(|| DhtEntry {
                    key: *key,
                    value: v.value.clone(),
                    stored_at: BTreeSet::new(),
                    version: v.version,
                });
                if v.version > e.version {
                    e.version = v.version;
                    e.value = v.value.clone();
                    e.stored_at.clear();
                }
                if v.version == e.version {
                    e.stored_at.insert(*gw);
                }
            }
        }
        merged.into_values().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SyncReport {
    pub synced: usize,
    /// Records older than the TTL, dropped instead of stored.
    pub expired: usize,
}

/// Pushes the vehicle's unsynced identifications into the DHT through
/// `gateway`, at most `limit` of them. Progress is kept if the DHT refuses
/// part way; the rest stays pending for the next contact.
pub fn sync_identifications(
    mobile: &mut MobileNode,
    dht: &mut Dht,
    gateway: NodeId,
    now: SimTime,
    limit: usize,
    ttl: f64,
) -> Result<SyncReport, GatewayError> {
    if !dht.contains_gateway(gateway) {
        return Err(GatewayError::UnknownGateway(gateway));
    }
    if !dht.is_reachable(gateway) {
        return Err(GatewayError::GatewayUnreachable(gateway));
    }
    let mut report = SyncReport::default();
    let batch: Vec<_> = mobile.unsynced().iter().take(limit).copied().collect();
    let mut result = Ok(());
    for rec in &batch {
        if now - rec.rx_time > ttl {
            report.expired += 1;
            mobile.mark_processed(false);
            continue;
        }
        match dht.dht_put(DhtKey::for_record(rec.beacon_id, rec.seq), rec.encode(), now) {
            Ok(_) => {
                report.synced += 1;
                mobile.mark_processed(true);
            }
            Err(e) => {
                result = Err(e);
                break;
            }
        }
    }
    result.map(|_| report)
}
