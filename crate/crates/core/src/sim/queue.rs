//! Time-ordered event queue with a fixed tie order.

use alloc::collections::BinaryHeap;
use core::cmp::{Ordering, Reverse};

use crate::{TaskId, Time};

/// Why a mode-change event fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeEventCause {
    /// Randomly arriving request (validation scenario).
    Request,
    /// End of the HI-mode recovery dwell.
    Return,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Fault { epoch: u64 },
    ModeChange { cause: ModeEventCause, epoch: u64 },
    Release { task: TaskId, epoch: u64 },
    Deadline { job: u64 },
    Tick,
}

impl EventKind {
    /// Order among events at the same instant.
    pub fn rank(&self) -> u8 {
        match self {
            EventKind::Fault { .. } => 0,
            EventKind::ModeChange { .. } => 1,
            EventKind::Release { .. } => 2,
            EventKind::Deadline { .. } => 3,
            EventKind::Tick => 4,
        }
    }

    fn sub_key(&self) -> u64 {
        match self {
            EventKind::Release { task, .. } => *task as u64,
            EventKind::Deadline { job } => *job,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub time: Time,
    pub kind: EventKind,
    seq: u64,
}

impl Event {
    fn key(&self) -> (Time, u8, u64, u64) {
        (self.time, self.kind.rank(), self.kind.sub_key(), self.seq)
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-queue of events: time, then kind rank (fault, mode change, release,
/// deadline, tick), then task id or job number, then insertion order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Event>>,
    seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: Time, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Reverse(Event { time, kind, seq: self.seq }));
    }

    pub fn peek_time(&self) -> Option<Time> {
        self.heap.peek().map(|e| e.0.time)
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|e| e.0)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn tie_order() {
        let mut q = EventQueue::new();
        q.push(10, EventKind::Tick);
        q.push(10, EventKind::Deadline { job: 1 });
        q.push(10, EventKind::Release { task: 3, epoch: 0 });
        q.push(10, EventKind::Release { task: 1, epoch: 0 });
        q.push(10, EventKind::ModeChange { cause: ModeEventCause::Request, epoch: 0 });
        q.push(10, EventKind::Fault { epoch: 0 });
        q.push(5, EventKind::Tick);
        let order: Vec<(Time, u8, u64)> = core::iter::from_fn(|| q.pop())
            .map(|e| (e.time, e.kind.rank(), e.kind.sub_key()))
            .collect();
        assert_eq!(order, [(5, 4, 0), (10, 0, 0), (10, 1, 0), (10, 2, 1), (10, 2, 3), (10, 3, 1), (10, 4, 0)]);
    }
}
