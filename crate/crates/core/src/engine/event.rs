use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::time::SimTime;

/// Scheduled work for the kernel. Declaration order is the tiebreak
/// priority for events sharing a timestamp.
#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// End of an 802.11p frame.
    AdhocReception { tx: u64 },
    /// Downlink broadcast of a beacon relayed through LTE.
    LteReception { delivery: u64 },
    TimerExpiry { vehicle: usize, timer: Timer },
    NlmEvaluation,
    BeaconDue { vehicle: usize },
    /// Carrier-sense attempt for the head of a vehicle's queue.
    ChannelAccess { vehicle: usize },
    MobilityTick,
    VhoComplete { vehicle: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timer {
    Bfa,
    PeriodicEpoch,
}

impl EventKind {
    pub fn priority(&self) -> u8 {
        match self {
            EventKind::AdhocReception { .. } | EventKind::LteReception { .. } => 0,
            EventKind::TimerExpiry { .. } => 1,
            EventKind::NlmEvaluation => 2,
            EventKind::BeaconDue { .. } => 3,
            EventKind::ChannelAccess { .. } => 4,
            EventKind::MobilityTick => 5,
            EventKind::VhoComplete { .. } => 6,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EventKind::AdhocReception { .. } => "rx-adhoc",
            EventKind::LteReception { .. } => "rx-lte",
            EventKind::TimerExpiry { timer: Timer::Bfa, .. } => "timer-bfa",
            EventKind::TimerExpiry {
                timer: Timer::PeriodicEpoch,
                ..
            } => "timer-epoch",
            EventKind::NlmEvaluation => "nlm",
            EventKind::BeaconDue { .. } => "beacon",
            EventKind::ChannelAccess { .. } => "access",
            EventKind::MobilityTick => "mobility",
            EventKind::VhoComplete { .. } => "vho-complete",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    // BinaryHeap is a max-heap: reverse so the earliest event pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.kind.priority(), other.seq).cmp(&(self.time, self.kind.priority(), self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Future event set ordered by (time, kind priority, insertion sequence).
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
    now: SimTime,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Schedules `kind` at `time`. Times in the past are clamped to now.
    pub fn schedule(&mut self, time: SimTime, kind: EventKind) {
        debug_assert!(time >= self.now, "event scheduled in the past");
        let time = time.max(self.now);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind });
    }

    pub fn pop(&mut self) -> Option<Event> {
        let ev = self.heap.pop()?;
        self.now = ev.time;
        Some(ev)
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
