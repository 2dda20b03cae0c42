use std::fmt;

use crate::model::Location;
use crate::record::TraceRecord;

use super::{CommSide, TraceBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    InvalidModel,
    LocationOutOfRange,
    StateInverted,
    UnknownState,
    EmptyEvent,
    ZeroEventType,
    Causality,
    AfterEndOfTrace,
    DuplicateTypeCode,
    UnmatchedComm,
    BadLabel,
    RowCount,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Index into `bundle.records`, when the violation is about one record.
    pub record: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    fn push(&mut self, kind: ViolationKind, record: Option<usize>, message: String) {
        self.violations.push(Violation {
            kind,
            record,
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            match v.record {
                Some(i) => writeln!(f, "record {i}: {:?}: {}", v.kind, v.message)?,
                None => writeln!(f, "{:?}: {}", v.kind, v.message)?,
            }
        }
        Ok(())
    }
}

fn bad_label(s: &str) -> bool {
    s.contains(['\n', '\r']) || s.trim() != s
}

/// Lists every structural problem of `bundle`. An empty report means the
/// bundle can be written and read back unchanged.
pub fn validate_bundle(bundle: &TraceBundle) -> ValidationReport {
    use ViolationKind::*;
    let mut report = ValidationReport::default();
    let h = &bundle.header;

    if let Err(e) = h.resources.validate().and_then(|_| h.process.validate(&h.resources)) {
        report.push(InvalidModel, None, e.to_string());
    }

    let cpus = h.resources.total_cpus();
    let loc_ok = |l: &Location| h.process.contains(l.key()) && l.cpu <= cpus;
    let total = h.total_time;

    for (i, r) in bundle.records.iter().enumerate() {
        let at = Some(i);
        match r {
            TraceRecord::State(s) => {
                if !loc_ok(&s.location) {
                    report.push(LocationOutOfRange, at, format!("location out of range: {}", s.location));
                }
                if s.begin > s.end {
                    report.push(StateInverted, at, format!("state begins at {} after it ends at {}", s.begin, s.end));
                }
                if !bundle.states.is_empty() && !bundle.states.contains_key(&s.state) {
                    report.push(UnknownState, at, format!("state code {} not in the state table", s.state));
                }
            }
            TraceRecord::Event(e) => {
                if !loc_ok(&e.location) {
                    report.push(LocationOutOfRange, at, format!("location out of range: {}", e.location));
                }
                if e.pairs.is_empty() {
                    report.push(EmptyEvent, at, "event without type:value pairs".into());
                }
                if e.pairs.iter().any(|&(t, _)| t == 0) {
                    report.push(ZeroEventType, at, "event type 0".into());
                }
            }
            TraceRecord::Comm(c) => {
                for l in [&c.send, &c.recv] {
                    if !loc_ok(l) {
                        report.push(LocationOutOfRange, at, format!("location out of range: {l}"));
                    }
                }
                if c.physical_send > c.physical_recv {
                    report.push(Causality, at, format!(
                        "received at {} before being sent at {}",
                        c.physical_recv, c.physical_send
                    ));
                }
                if c.logical_send > c.physical_send {
                    report.push(Causality, at, format!(
                        "logical send {} after physical send {}",
                        c.logical_send, c.physical_send
                    ));
                }
                if c.logical_recv > c.physical_recv {
                    report.push(Causality, at, format!(
                        "logical receive {} after physical receive {}",
                        c.logical_recv, c.physical_recv
                    ));
                }
            }
        }
        if r.end_time() > total {
            report.push(AfterEndOfTrace, at, format!(
                "timestamp {} beyond trace end {}",
                r.end_time(),
                total
            ));
        }
    }

    for code in bundle.registry.duplicates() {
        report.push(DuplicateTypeCode, None, format!("event type {code} defined more than once"));
    }
    for (code, info) in bundle.registry.iter() {
        if code == 0 {
            report.push(ZeroEventType, None, "event type 0 registered".into());
        }
        if bad_label(&info.description) || info.values.values().any(|l| bad_label(l)) {
            report.push(BadLabel, None, format!("labels of event type {code} cannot be written verbatim"));
        }
    }
    for (code, label) in &bundle.states {
        if bad_label(label) {
            report.push(BadLabel, None, format!("label of state {code} cannot be written verbatim"));
        }
    }

    let rows = &bundle.rows;
    for (level, names, expected) in [
        ("NODE", &rows.node, h.resources.nodes.len()),
        ("TASK", &rows.task, h.process.task_count()),
        ("THREAD", &rows.thread, h.process.thread_count()),
    ] {
        if !names.is_empty() && names.len() != expected {
            report.push(RowCount, None, format!(
                "{} {level} names for {expected} objects",
                names.len()
            ));
        }
        if names.iter().any(|n| n.contains(['\n', '\r'])) {
            report.push(BadLabel, None, format!("{level} name spans lines"));
        }
    }

    for u in &bundle.unmatched {
        let side = match u.side {
            CommSide::Send => "send",
            CommSide::Recv => "receive",
        };
        report.push(UnmatchedComm, None, format!(
            "unmatched {side} at {} on {} (peer task {}, tag {})",
            u.time, u.location, u.peer_task, u.tag
        ));
    }

    report
}
