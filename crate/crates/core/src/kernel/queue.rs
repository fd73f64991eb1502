use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::trace::EventKind;
use crate::Millis;

pub type EventId = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub id: EventId,
    pub fire_at: Millis,
    /// Service or replica the event is addressed to.
    pub target: String,
    pub kind: EventKind,
    pub payload: P,
}

struct Slot<P>(Event<P>);

impl<P> PartialEq for Slot<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.fire_at == other.0.fire_at && self.0.id == other.0.id
    }
}

impl<P> Eq for Slot<P> {}

impl<P> Ord for Slot<P> {
    // BinaryHeap is a max-heap; reverse so the earliest (fire_at, id) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.fire_at, other.0.id).cmp(&(self.0.fire_at, self.0.id))
    }
}

impl<P> PartialOrd for Slot<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Pending events ordered by `(fire_at, id)`.
pub struct EventQueue<P> {
    heap: BinaryHeap<Slot<P>>,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self {
            heap: BinaryHeap::new(),
        }
    }
}

impl<P> EventQueue<P> {
    pub fn push(&mut self, ev: Event<P>) {
        self.heap.push(Slot(ev));
    }

    pub fn peek_time(&self) -> Option<Millis> {
        self.heap.peek().map(|s| s.0.fire_at)
    }

    pub fn pop(&mut self) -> Option<Event<P>> {
        self.heap.pop().map(|s| s.0)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
