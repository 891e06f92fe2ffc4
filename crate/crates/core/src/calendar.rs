//! Future event list ordered by `(time, kind rank, instance id, insertion)`.
//!
//! The kind rank fixes the order of simultaneous events: departures, then
//! expirations, then arrivals.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::instance::InstanceId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Departure { instance: InstanceId },
    Expiration { instance: InstanceId, epoch: u64 },
    Arrival,
}

impl Event {
    fn rank(&self) -> u8 {
        match self {
            Event::Departure { .. } => 0,
            Event::Expiration { .. } => 1,
            Event::Arrival => 2,
        }
    }

    fn instance(&self) -> InstanceId {
        match self {
            Event::Departure { instance } | Event::Expiration { instance, .. } => *instance,
            Event::Arrival => 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    time: f64,
    seq: u64,
    event: Event,
}

impl Entry {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.event.rank().cmp(&other.event.rank()))
            .then(self.event.instance().cmp(&other.event.instance()))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

#[derive(Debug, Default)]
pub struct Calendar {
    heap: BinaryHeap<Reverse<Entry>>,
    seq: u64,
}

impl Calendar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, time: f64, event: Event) {
        debug_assert!(!time.is_nan());
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Reverse(Entry { time, seq, event }));
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|Reverse(e)| e.time)
    }

    pub fn pop(&mut self) -> Option<(f64, Event)> {
        self.heap.pop().map(|Reverse(e)| (e.time, e.event))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
