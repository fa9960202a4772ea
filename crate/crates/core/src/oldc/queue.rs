use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::macsac::{Actor, Transition};

/// A versioned, immutable copy of one agent's policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshot {
    pub agent: usize,
    pub version: u64,
    pub actor: Actor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    ControlTick { agent: usize },
    UploadTick,
    TrainTick,
    PolicyArrival(Box<PolicySnapshot>),
    SampleArrival(Box<Transition>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Control,
    PolicyArrival,
    SampleArrival,
    Upload,
    Train,
}

impl Event {
    pub fn kind(&self) -> EventKind {
        match self {
            Event::ControlTick { .. } => EventKind::Control,
            Event::PolicyArrival(_) => EventKind::PolicyArrival,
            Event::SampleArrival(_) => EventKind::SampleArrival,
            Event::UploadTick => EventKind::Upload,
            Event::TrainTick => EventKind::Train,
        }
    }

    /// Tie-break rank at equal times: control, arrivals, upload, train.
    pub fn priority(&self) -> u8 {
        match self {
            Event::ControlTick { .. } => 0,
            Event::PolicyArrival(_) | Event::SampleArrival(_) => 1,
            Event::UploadTick => 2,
            Event::TrainTick => 3,
        }
    }
}

struct Scheduled {
    time: u64,
    priority: u8,
    seq: u64,
    event: Event,
}

impl Scheduled {
    fn key(&self) -> (u64, u8, u64) {
        (self.time, self.priority, self.seq)
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed so the max-heap pops the earliest key.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

/// Time-ordered events; ties go by priority, then insertion order.
#[derive(Default)]
pub struct EventQueue {
    heap: BinaryHeap<Scheduled>,
    seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: u64, event: Event) {
        self.heap.push(Scheduled {
            time,
            priority: event.priority(),
            seq: self.seq,
            event,
        });
        self.seq += 1;
    }

    /// Earliest event with its time and sequence number.
    pub fn pop(&mut self) -> Option<(u64, u64, Event)> {
        self.heap.pop().map(|s| (s.time, s.seq, s.event))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
