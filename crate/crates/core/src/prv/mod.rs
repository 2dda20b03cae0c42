//! Paraver trace bundles: `.prv` records, `.pcf` dictionary and `.row` labels.
//!
//! The `.prv` grammar:
//!
//! ```text
//! #Paraver (dd/mm/yy at hh:mm):FTIME_ns:NNODES(cpus1,...):NAPPL:NTASKS(nthreads1:node1,...)[:...]
//! 1:cpu:appl:task:thread:begin:end:state
//! 2:cpu:appl:task:thread:time:type:value[:type:value]*
//! 3:cpu:appl:task:thread:lsend:psend:cpu:appl:task:thread:lrecv:precv:size:tag
//! ```
//!
//! All numbers are unsigned decimal. Records are written sorted by time, ties
//! broken state < event < comm and then by (appl, task, thread).

mod header;
mod parser;
mod validate;
mod writer;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use header::{format_header, parse_header, CaptureTime, Header};
pub use parser::{parse_bundle, parse_bundle_from, parse_pcf, parse_prv, parse_row, FileKind, ParseError};
pub use validate::{validate_bundle, ValidationReport, Violation, ViolationKind};
pub use writer::{write_bundle, write_pcf, write_prv, write_row, UNREGISTERED_PREFIX};

use crate::model::{Location, ProcessModel, ResourceModel};
use crate::record::{sort_canonical, TraceRecord};
use crate::registry::{EventRegistry, StateTable};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("refusing to write an invalid bundle:\n{0}")]
    Invalid(ValidationReport),
}

/// Names shown for each row of the THREAD, TASK and NODE levels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RowLabels {
    pub node: Vec<String>,
    pub task: Vec<String>,
    pub thread: Vec<String>,
}

impl RowLabels {
    /// `node1..`, `TASK a.t`, `THREAD a.t.th`.
    pub fn defaults(process: &ProcessModel, resources: &ResourceModel) -> Self {
        RowLabels {
            node: (1..=resources.nodes.len()).map(|n| format!("node{n}")).collect(),
            task: process
                .tasks()
                .map(|(a, t)| format!("TASK {a}.{t}"))
                .collect(),
            thread: process.threads().map(|k| format!("THREAD {k}")).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CommSide {
    Send,
    Recv,
}

/// A communication half that never found its partner. Kept in memory only;
/// the .prv grammar has no way to express it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UnmatchedComm {
    pub side: CommSide,
    pub location: Location,
    pub peer_task: u32,
    pub tag: u64,
    pub time: u64,
}

/// Everything needed to write, read back and analyze one trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceBundle {
    pub header: Header,
    pub records: Vec<TraceRecord>,
    pub registry: EventRegistry,
    pub states: StateTable,
    pub rows: RowLabels,
    pub unmatched: Vec<UnmatchedComm>,
}

impl TraceBundle {
    pub fn new(header: Header) -> Self {
        TraceBundle {
            header,
            records: Vec::new(),
            registry: EventRegistry::new(),
            states: StateTable::new(),
            rows: RowLabels::default(),
            unmatched: Vec::new(),
        }
    }

    pub fn process(&self) -> &ProcessModel {
        &self.header.process
    }

    pub fn resources(&self) -> &ResourceModel {
        &self.header.resources
    }

    pub fn total_time(&self) -> u64 {
        self.header.total_time
    }

    /// Sorts records into the order the writer emits them.
    pub fn canonicalize(&mut self) {
        sort_canonical(&mut self.records);
    }

    pub fn canonicalized(mut self) -> Self {
        self.canonicalize();
        self
    }
}

/// `base.prv`, `base.pcf`, `base.row`. A trailing `.prv` on `base` is ignored.
pub fn bundle_paths(base: impl AsRef<Path>) -> (PathBuf, PathBuf, PathBuf) {
    let base = base.as_ref();
    let stem = if base.extension().is_some_and(|e| e == "prv") {
        base.with_extension("")
    } else {
        base.to_path_buf()
    };
    let with = |ext: &str| {
        let mut s = stem.clone().into_os_string();
        s.push(".");
        s.push(ext);
        PathBuf::from(s)
    };
    (with("prv"), with("pcf"), with("row"))
}
