//! The three annotation kinds a trace is made of.

use std::cmp::Ordering;

use crate::model::Location;

pub type EventType = u32;
pub type EventValue = u64;
pub type StateCode = u32;

pub const STATE_IDLE: StateCode = 0;
pub const STATE_RUNNING: StateCode = 1;
pub const STATE_EXTERNAL: StateCode = 7;

/// A time interval on one thread labelled with an activity code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateRecord {
    pub location: Location,
    pub begin: u64,
    pub end: u64,
    pub state: StateCode,
}

/// One or more `(type, value)` pairs at a single point in time.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EventRecord {
    pub location: Location,
    pub time: u64,
    pub pairs: Vec<(EventType, EventValue)>,
}

/// A message between two locations.
///
/// Logical times are when the send/receive was issued, physical times when
/// the data left / arrived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CommRecord {
    pub send: Location,
    pub recv: Location,
    pub logical_send: u64,
    pub physical_send: u64,
    pub logical_recv: u64,
    pub physical_recv: u64,
    pub size: u64,
    pub tag: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TraceRecord {
    State(StateRecord),
    Event(EventRecord),
    Comm(CommRecord),
}

impl TraceRecord {
    /// The time the record is sorted by: state begin, event time, logical send.
    pub fn time(&self) -> u64 {
        match self {
            TraceRecord::State(s) => s.begin,
            TraceRecord::Event(e) => e.time,
            TraceRecord::Comm(c) => c.logical_send,
        }
    }

    /// Latest timestamp mentioned by the record.
    pub fn end_time(&self) -> u64 {
        match self {
            TraceRecord::State(s) => s.end.max(s.begin),
            TraceRecord::Event(e) => e.time,
            TraceRecord::Comm(c) => c
                .logical_send
                .max(c.physical_send)
                .max(c.logical_recv)
                .max(c.physical_recv),
        }
    }

    /// Record kind digit in the .prv grammar.
    pub fn kind(&self) -> u8 {
        match self {
            TraceRecord::State(_) => 1,
            TraceRecord::Event(_) => 2,
            TraceRecord::Comm(_) => 3,
        }
    }

    pub fn location(&self) -> &Location {
        match self {
            TraceRecord::State(s) => &s.location,
            TraceRecord::Event(e) => &e.location,
            TraceRecord::Comm(c) => &c.send,
        }
    }

    pub fn as_state(&self) -> Option<&StateRecord> {
        match self {
            TraceRecord::State(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_event(&self) -> Option<&EventRecord> {
        match self {
            TraceRecord::Event(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_comm(&self) -> Option<&CommRecord> {
        match self {
            TraceRecord::Comm(c) => Some(c),
            _ => None,
        }
    }
}

/// Canonical record order: time, then state < event < comm, then
/// (appl, task, thread). Callers sort stably so equal keys keep their order.
pub fn canonical_order(a: &TraceRecord, b: &TraceRecord) -> Ordering {
    let ka = (a.time(), a.kind(), a.location().key());
    let kb = (b.time(), b.kind(), b.location().key());
    ka.cmp(&kb)
}

pub fn sort_canonical(records: &mut [TraceRecord]) {
    records.sort_by(canonical_order);
}

impl From<StateRecord> for TraceRecord {
    fn from(s: StateRecord) -> Self {
        TraceRecord::State(s)
    }
}

impl From<EventRecord> for TraceRecord {
    fn from(e: EventRecord) -> Self {
        TraceRecord::Event(e)
    }
}

impl From<CommRecord> for TraceRecord {
    fn from(c: CommRecord) -> Self {
        TraceRecord::Comm(c)
    }
}
