//! Single-threaded discrete-event engine.
//!
//! Events are dispatched in `(fire_at, seq)` order where `seq` is the
//! insertion counter, so simultaneous events fire in the order they were
//! scheduled. Dispatch is horizon-inclusive.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::time::{Instant, Span};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle(pub u64);

/// One row of the optional event log (`t_ns, entity, event, detail`).
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct TraceRow {
    pub t_ns: u64,
    pub entity: &'static str,
    pub event: &'static str,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event<K> {
    pub fire_at: Instant,
    pub seq: u64,
    pub target: EntityId,
    pub kind: K,
}

struct Queued<K> {
    key: Reverse<(Instant, u64)>,
    target: EntityId,
    kind: K,
}

impl<K> PartialEq for Queued<K> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl<K> Eq for Queued<K> {}
impl<K> PartialOrd for Queued<K> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<K> Ord for Queued<K> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

pub struct Engine<K> {
    clock: Instant,
    next_seq: u64,
    dispatched: u64,
    queue: BinaryHeap<Queued<K>>,
}

impl<K> Default for Engine<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> Engine<K> {
    pub fn new() -> Self {
        Self { clock: Instant::ORIGIN, next_seq: 0, dispatched: 0, queue: BinaryHeap::new() }
    }

    pub fn now(&self) -> Instant {
        self.clock
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Total events dispatched since construction.
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn schedule(&mut self, fire_at: Instant, target: EntityId, kind: K) -> Result<EventHandle> {
        if fire_at < self.clock {
            return Err(Error::SchedulingInPast { fire_at, clock: self.clock });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Queued { key: Reverse((fire_at, seq)), target, kind });
        Ok(EventHandle(seq))
    }

    pub fn schedule_in(&mut self, delay: Span, target: EntityId, kind: K) -> EventHandle {
        let at = self.clock.saturating_add(delay);
        self.schedule(at, target, kind).expect("relative schedule is never in the past")
    }

    /// Pops the next event if it fires at or before `horizon`, advancing the clock.
    pub fn pop_until(&mut self, horizon: Instant) -> Option<Event<K>> {
        let head = self.queue.peek()?;
        if head.key.0 .0 > horizon {
            return None;
        }
        let Queued { key: Reverse((fire_at, seq)), target, kind } = self.queue.pop()?;
        debug_assert!(fire_at >= self.clock);
        self.clock = fire_at;
        self.dispatched += 1;
        Some(Event { fire_at, seq, target, kind })
    }

    /// Dispatches every event with `fire_at <= horizon`, then sets the clock
    /// to `horizon`. Returns the number of events dispatched by this call.
    pub fn run_until<F>(&mut self, horizon: Instant, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, Event<K>),
    {
        let mut count = 0;
        while let Some(ev) = self.pop_until(horizon) {
            count += 1;
            handler(self, ev);
        }
        if horizon > self.clock {
            self.clock = horizon;
        }
        count
    }
}
