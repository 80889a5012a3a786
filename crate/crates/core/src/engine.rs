//! Deterministic discrete-event core: a virtual clock, an ordered event queue
//! and labeled random streams.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::string::{String, ToString};
use core::cmp::{Ordering, Reverse};
use core::fmt;
use core::ops::{Add, Sub};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("event scheduled at {fire_at} s but the clock is already at {now} s")]
    InPast { fire_at: f64, now: f64 },
    #[error("cannot run backwards from {now} s to {t_end} s")]
    RunBackwards { now: f64, t_end: f64 },
    #[error("invalid simulation time {0}")]
    InvalidTime(f64),
    #[error("unknown rng stream {0:?}")]
    UnknownStream(String),
}

/// Virtual time in seconds. Always finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn new(secs: f64) -> Result<Self, EngineError> {
        if secs.is_finite() && secs >= 0.0 {
            // normalizes -0.0
            Ok(SimTime(secs + 0.0))
        } else {
            Err(EngineError::InvalidTime(secs))
        }
    }

    /// Panics on a negative or non-finite value.
    pub fn from_secs(secs: f64) -> Self {
        match Self::new(secs) {
            Ok(t) => t,
            Err(e) => panic!("{e}"),
        }
    }

    pub fn secs(self) -> f64 {
        self.0
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add<f64> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: f64) -> SimTime {
        SimTime::from_secs(self.0 + rhs)
    }
}

impl Sub for SimTime {
    type Output = f64;
    fn sub(self, rhs: SimTime) -> f64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.0)
    }
}

/// Handle returned by [`EventQueue::schedule`]; equal to the event's sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Event<K> {
    pub id: EventId,
    pub fire_at: SimTime,
    pub sequence: u64,
    pub kind: K,
}

/// Priority queue ordered lexicographically on `(fire_at, sequence)`.
///
/// Sequence numbers start at 1 and are handed out in insertion order, so two
/// events at the same instant fire in the order they were scheduled.
#[derive(Debug)]
pub struct EventQueue<K> {
    now: SimTime,
    next_sequence: u64,
    order: BinaryHeap<Reverse<(SimTime, u64)>>,
    payloads: BTreeMap<u64, K>,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        EventQueue {
            now: SimTime::ZERO,
            next_sequence: 1,
            order: BinaryHeap::new(),
            payloads: BTreeMap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Events scheduled and neither fired nor cancelled.
    pub fn pending(&self) -> usize {
        self.payloads.len()
    }

    pub fn schedule(&mut self, fire_at: SimTime, kind: K) -> Result<EventId, EngineError> {
        if fire_at < self.now {
            return Err(EngineError::InPast {
                fire_at: fire_at.secs(),
                now: self.now.secs(),
            });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.order.push(Reverse((fire_at, sequence)));
        self.payloads.insert(sequence, kind);
        Ok(EventId(sequence))
    }

    pub fn schedule_in(&mut self, delay: f64, kind: K) -> Result<EventId, EngineError> {
        let at = SimTime::new(self.now.secs() + delay)?;
        self.schedule(at, kind)
    }

    /// Returns false if the event already fired or was cancelled.
    pub fn cancel(&mut self, id: EventId) -> bool {
        self.payloads.remove(&id.0).is_some()
    }

    /// Pops the next live event with `fire_at <= t_end` and advances the clock to it.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Event<K>> {
        while let Some(Reverse((fire_at, sequence))) = self.order.peek().copied() {
            if fire_at > t_end {
                return None;
            }
            self.order.pop();
            if let Some(kind) = self.payloads.remove(&sequence) {
                self.now = fire_at;
                return Some(Event {
                    id: EventId(sequence),
                    fire_at,
                    sequence,
                    kind,
                });
            }
        }
        None
    }

    /// Dispatches every event with `fire_at <= t_end` and leaves the clock at `t_end`.
    ///
    /// The handler may schedule further events; those also fire if they fall
    /// inside the horizon.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> Result<usize, EngineError>
    where
        F: FnMut(&mut Self, Event<K>),
    {
        if t_end < self.now {
            return Err(EngineError::RunBackwards {
                now: self.now.secs(),
                t_end: t_end.secs(),
            });
        }
        let mut dispatched = 0;
        while let Some(event) = self.pop_until(t_end) {
            dispatched += 1;
            handler(self, event);
        }
        self.now = t_end;
        Ok(dispatched)
    }
}

/// 64-bit digest of a sequence of byte strings, stable across platforms and releases.
pub fn stable_hash64(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

/// One labeled ChaCha8 stream. The seed picks the key and the label picks the
/// ChaCha stream id, so streams with different labels never overlap.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    label: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stable_hash64(&[b"rng-stream", label.as_bytes()]));
        RngStream {
            seed,
            label: label.to_string(),
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        rand::Rng::random::<f64>(self)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// The set of streams registered for one run.
#[derive(Debug, Clone)]
pub struct RngStreams {
    seed: u64,
    streams: BTreeMap<String, RngStream>,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        RngStreams {
            seed,
            streams: BTreeMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Registering a label twice keeps the existing stream position.
    pub fn register(&mut self, label: &str) {
        if !self.streams.contains_key(label) {
            self.streams
                .insert(label.to_string(), RngStream::new(self.seed, label));
        }
    }

    pub fn stream(&mut self, label: &str) -> Result<&mut RngStream, EngineError> {
        self.streams
            .get_mut(label)
            .ok_or_else(|| EngineError::UnknownStream(label.to_string()))
    }

    pub fn draw(&mut self, label: &str) -> Result<f64, EngineError> {
        Ok(self.stream(label)?.uniform())
    }
}
