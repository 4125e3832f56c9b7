//! Deterministic discrete-event scheduler.
//!
//! Events fire in `(fire_time, sequence)` order where `sequence` is the
//! insertion counter, so simultaneous events are dispatched FIFO. The run is
//! a pure function of the initial schedule and of the handlers' random draws.

use alloc::collections::{BTreeSet, BinaryHeap};
use alloc::string::String;
use core::cmp::Ordering;
use core::fmt::{self, Write};

use crate::time::SimTime;

/// Payload of a scheduled event.
pub trait EventKind {
    /// Short name of the event class, e.g. `pair-arrival`.
    fn kind(&self) -> &'static str;

    /// Free-form detail written in the trace log.
    fn detail(&self, out: &mut dyn Write) -> fmt::Result;
}

/// Handle of a scheduled event, usable for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn sequence(self) -> u64 {
        self.0
    }
}

struct Entry<E> {
    fire_time: SimTime,
    sequence: u64,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.sequence == other.sequence
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap: invert so the earliest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_time
            .cmp(&self.fire_time)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

/// Event queue and simulation clock of one replication.
pub struct Scheduler<E> {
    now: SimTime,
    next_sequence: u64,
    queue: BinaryHeap<Entry<E>>,
    pending: BTreeSet<u64>,
    dispatched: u64,
    trace: Option<String>,
}

impl<E: EventKind> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: EventKind> Scheduler<E> {
    pub fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            next_sequence: 0,
            queue: BinaryHeap::new(),
            pending: BTreeSet::new(),
            dispatched: 0,
            trace: None,
        }
    }

    /// Record one line per dispatch: `<time_s>\t<seq>\t<kind>\t<detail>`.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(String::new);
    }

    pub fn trace(&self) -> Option<&str> {
        self.trace.as_deref()
    }

    pub fn take_trace(&mut self) -> Option<String> {
        self.trace.take()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events dispatched so far.
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Number of events scheduled and neither dispatched nor cancelled.
    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Schedule `payload` to fire `delay` seconds from now.
    pub fn schedule(&mut self, delay: f64, payload: E) -> EventHandle {
        assert!(delay >= 0.0 && delay.is_finite(), "invalid event delay {delay}");
        let at = self.now + delay;
        self.schedule_at(at, payload)
    }

    /// Schedule `payload` at an absolute time not earlier than now.
    pub fn schedule_at(&mut self, at: SimTime, payload: E) -> EventHandle {
        assert!(at >= self.now, "cannot schedule in the past: {at} < {}", self.now);
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Entry {
            fire_time: at,
            sequence,
            payload,
        });
        self.pending.insert(sequence);
        EventHandle(sequence)
    }

    /// Cancel a pending event. Returns false if it already fired or was
    /// cancelled before.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.0)
    }

    /// Pop the next event with `fire_time <= t_end`, advancing the clock to it.
    pub fn next_until(&mut self, t_end: SimTime) -> Option<E> {
        loop {
            let head = self.queue.peek()?;
            if head.fire_time > t_end {
                return None;
            }
            let entry = self.queue.pop().expect("peeked entry");
            if !self.pending.remove(&entry.sequence) {
                continue; // cancelled
            }
            debug_assert!(entry.fire_time >= self.now);
            self.now = entry.fire_time;
            self.dispatched += 1;
            if let Some(trace) = self.trace.as_mut() {
                write_trace_line(trace, entry.fire_time, entry.sequence, &entry.payload);
            }
            return Some(entry.payload);
        }
    }

    /// Move the clock forward to `t` without dispatching anything.
    pub fn advance_to(&mut self, t: SimTime) {
        assert!(t >= self.now, "clock cannot move backwards");
        self.now = t;
    }

    /// Dispatch every event with `fire_time <= t_end` in order, then leave the
    /// clock at `t_end`. Returns the number of dispatched events.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, E),
    {
        assert!(t_end >= self.now, "run_until into the past");
        let before = self.dispatched;
        while let Some(event) = self.next_until(t_end) {
            handler(self, event);
        }
        self.advance_to(t_end);
        self.dispatched - before
    }
}

fn write_trace_line<E: EventKind>(out: &mut String, at: SimTime, seq: u64, payload: &E) {
    let _ = write!(out, "{at}\t{seq}\t{}\t", payload.kind());
    let _ = payload.detail(out);
    out.push('\n');
}
