use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::exec::Execution;
use crate::model::Location;
use crate::record::{CommRecord, EventRecord, StateRecord, TraceRecord};
use crate::registry::{EventRegistry, EventTypeInfo, StateTable};

use super::{bundle_paths, parse_header, FormatError, Header, RowLabels, TraceBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Prv,
    Pcf,
    Row,
}

impl fmt::Display for FileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FileKind::Prv => ".prv",
            FileKind::Pcf => ".pcf",
            FileKind::Row => ".row",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{file}: {message} at line {line}")]
pub struct ParseError {
    pub file: FileKind,
    /// 1-based.
    pub line: usize,
    pub message: String,
}

fn lines(bytes: &[u8]) -> impl Iterator<Item = (usize, &[u8])> {
    let bytes = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    let empty = bytes.is_empty();
    bytes
        .split(|&b| b == b'\n')
        .map(|l| l.strip_suffix(b"\r").unwrap_or(l))
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(move |_| !empty)
}

fn utf8(file: FileKind, line: usize, bytes: &[u8]) -> Result<&str, ParseError> {
    std::str::from_utf8(bytes).map_err(|_| ParseError {
        file,
        line,
        message: "invalid UTF-8".into(),
    })
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("non-numeric field {s:?}"));
    }
    s.parse().map_err(|_| format!("number out of range {s:?}"))
}

fn location(f: &[&str]) -> Result<Location, String> {
    Ok(Location {
        cpu: num(f[0])?,
        appl: num(f[1])?,
        task: num(f[2])?,
        thread: num(f[3])?,
    })
}

fn parse_record(line: &str) -> Result<Option<TraceRecord>, String> {
    let f: Vec<&str> = line.split(':').collect();
    let kind = f[0];
    match kind {
        "1" => {
            if f.len() != 8 {
                return Err(format!("state record has {} fields, expected 8", f.len()));
            }
            Ok(Some(TraceRecord::State(StateRecord {
                location: location(&f[1..5])?,
                begin: num(f[5])?,
                end: num(f[6])?,
                state: num(f[7])?,
            })))
        }
        "2" => {
            if f.len() < 8 || !f.len().is_multiple_of(2) {
                return Err(format!(
                    "event record has {} fields, expected 6 plus type:value pairs",
                    f.len()
                ));
            }
            let pairs = f[6..]
                .chunks(2)
                .map(|p| Ok((num(p[0])?, num(p[1])?)))
                .collect::<Result<Vec<_>, String>>()?;
            Ok(Some(TraceRecord::Event(EventRecord {
                location: location(&f[1..5])?,
                time: num(f[5])?,
                pairs,
            })))
        }
        "3" => {
            if f.len() != 15 {
                return Err(format!("communication record has {} fields, expected 15", f.len()));
            }
            Ok(Some(TraceRecord::Comm(CommRecord {
                send: location(&f[1..5])?,
                logical_send: num(f[5])?,
                physical_send: num(f[6])?,
                recv: location(&f[7..11])?,
                logical_recv: num(f[11])?,
                physical_recv: num(f[12])?,
                size: num(f[13])?,
                tag: num(f[14])?,
            })))
        }
        // communicator definitions and comments written by other tools
        k if k.starts_with('c') || k.starts_with('#') => Ok(None),
        k => Err(format!("unknown record type {k}")),
    }
}

/// Parses a `.prv` file body.
pub fn parse_prv(bytes: &[u8], exec: Execution) -> Result<(Header, Vec<TraceRecord>), ParseError> {
    let mut it = lines(bytes);
    let (_, first) = it.next().ok_or(ParseError {
        file: FileKind::Prv,
        line: 1,
        message: "empty file, missing header".into(),
    })?;
    let header = parse_header(utf8(FileKind::Prv, 1, first)?).map_err(|message| ParseError {
        file: FileKind::Prv,
        line: 1,
        message,
    })?;

    let body: Vec<(usize, &[u8])> = it.filter(|(_, l)| !l.is_empty()).collect();
    let parsed = exec.map(&body, |&(n, l)| {
        utf8(FileKind::Prv, n, l).and_then(|s| {
            parse_record(s).map_err(|message| ParseError {
                file: FileKind::Prv,
                line: n,
                message,
            })
        })
    });
    let mut records = Vec::with_capacity(parsed.len());
    for r in parsed {
        if let Some(rec) = r? {
            records.push(rec);
        }
    }
    Ok((header, records))
}

/// Splits `n` whitespace-separated leading fields off `line`; the remainder,
/// trimmed, is the label.
fn fields_and_label(line: &str, n: usize) -> Option<(Vec<&str>, &str)> {
    let mut rest = line.trim_start();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        if end == 0 {
            return None;
        }
        out.push(&rest[..end]);
        rest = rest[end..].trim_start();
    }
    Some((out, rest.trim_end()))
}

fn is_section_keyword(line: &str) -> bool {
    !line.is_empty()
        && line
            .bytes()
            .all(|b| b.is_ascii_uppercase() || b == b'_' || b.is_ascii_digit())
        && line.as_bytes()[0].is_ascii_uppercase()
}

/// Parses a `.pcf` body into the state table and event registry. Sections
/// other than STATES, EVENT_TYPE and VALUES are skipped.
pub fn parse_pcf(bytes: &[u8]) -> Result<(StateTable, EventRegistry), ParseError> {
    #[derive(PartialEq)]
    enum Section {
        None,
        States,
        Types,
        Values,
        Other,
    }
    let mut states = StateTable::new();
    let mut registry = EventRegistry::new();
    let mut section = Section::None;
    let mut block: Vec<u32> = Vec::new();

    for (n, raw) in lines(bytes) {
        let line = utf8(FileKind::Pcf, n, raw)?;
        let err = |message: String| ParseError {
            file: FileKind::Pcf,
            line: n,
            message,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            section = Section::None;
            continue;
        }
        if is_section_keyword(trimmed) {
            section = match trimmed {
                "STATES" => Section::States,
                "EVENT_TYPE" => {
                    block.clear();
                    Section::Types
                }
                "VALUES" if section == Section::Types && !block.is_empty() => Section::Values,
                "VALUES" => return Err(err("VALUES without a preceding EVENT_TYPE".into())),
                _ => Section::Other,
            };
            continue;
        }
        match section {
            Section::States => {
                let (f, label) =
                    fields_and_label(trimmed, 1).ok_or_else(|| err("malformed state".into()))?;
                states.insert(num(f[0]).map_err(err)?, label.to_string());
            }
            Section::Types => {
                let (f, label) = fields_and_label(trimmed, 2)
                    .ok_or_else(|| err("expected 'gradient type label'".into()))?;
                num::<u32>(f[0]).map_err(err)?;
                let code: u32 = num(f[1]).map_err(err)?;
                registry.insert_loaded(
                    code,
                    EventTypeInfo {
                        description: label.to_string(),
                        values: Default::default(),
                    },
                );
                block.push(code);
            }
            Section::Values => {
                let (f, label) = fields_and_label(trimmed, 1)
                    .ok_or_else(|| err("expected 'value label'".into()))?;
                let value: u64 = num(f[0]).map_err(err)?;
                for code in &block {
                    if let Some(info) = registry.loaded_mut(*code) {
                        info.values.insert(value, label.to_string());
                    }
                }
            }
            // Unknown sections, including option lines such as `LEVEL THREAD`.
            Section::Other | Section::None => {}
        }
    }
    Ok((states, registry))
}

/// Parses a `.row` body. Levels other than NODE, TASK and THREAD are skipped.
pub fn parse_row(bytes: &[u8]) -> Result<RowLabels, ParseError> {
    let mut rows = RowLabels::default();
    let all: Vec<(usize, &[u8])> = lines(bytes).collect();
    let mut i = 0;
    while i < all.len() {
        let (n, raw) = all[i];
        let line = utf8(FileKind::Row, n, raw)?;
        i += 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| ParseError {
            file: FileKind::Row,
            line: n,
            message,
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 || f[0] != "LEVEL" || f[2] != "SIZE" {
            return Err(err(format!("expected 'LEVEL <name> SIZE <n>', found {line:?}")));
        }
        let size: usize = num(f[3]).map_err(err)?;
        if i + size > all.len() {
            return Err(err(format!(
                "level {} declares {} names but only {} lines follow",
                f[1],
                size,
                all.len() - i
            )));
        }
        let names = all[i..i + size]
            .iter()
            .map(|&(n, l)| utf8(FileKind::Row, n, l).map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        i += size;
        match f[1] {
            "NODE" => rows.node = names,
            "TASK" => rows.task = names,
            "THREAD" => rows.thread = names,
            other => log::debug!("skipping row level {other}"),
        }
    }
    Ok(rows)
}

/// Parses in-memory file contents. Missing `.pcf` / `.row` give empty tables.
pub fn parse_bundle_from(
    prv: &[u8],
    pcf: Option<&[u8]>,
    row: Option<&[u8]>,
    exec: Execution,
) -> Result<TraceBundle, ParseError> {
    let (header, records) = parse_prv(prv, exec)?;
    let (states, registry) = match pcf {
        Some(b) => parse_pcf(b)?,
        None => Default::default(),
    };
    let rows = match row {
        Some(b) => parse_row(b)?,
        None => RowLabels::default(),
    };
    Ok(TraceBundle {
        header,
        records,
        registry,
        states,
        rows,
        unmatched: Vec::new(),
    })
}

/// Reads `base.prv` and, when present, `base.pcf` and `base.row`.
pub fn parse_bundle(base: impl AsRef<Path>) -> Result<TraceBundle, FormatError> {
    let (prv, pcf, row) = bundle_paths(base);
    let read = |p: &Path| {
        std::fs::read(p).map_err(|source| FormatError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    let optional = |p: &Path| match std::fs::read(p) {
        Ok(b) => Some(b),
        Err(e) => {
            log::warn!("{}: {e}; continuing without it", p.display());
            None
        }
    };
    let prv_bytes = read(&prv)?;
    let pcf_bytes = optional(&pcf);
    let row_bytes = optional(&row);
    Ok(parse_bundle_from(
        &prv_bytes,
        pcf_bytes.as_deref(),
        row_bytes.as_deref(),
        Execution::default(),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::STATE_RUNNING;

    const HEADER: &str = "#Paraver (01/07/24 at 12:00):1000_ns:1(4):1:2(1:1,1:1)";

    fn records(body: &str) -> Result<Vec<TraceRecord>, ParseError> {
        let text = format!("{HEADER}\n{body}");
        parse_prv(text.as_bytes(), Execution::Sequential).map(|(_, r)| r)
    }

    #[test]
    fn state_line() {
        let r = records("1:1:1:2:1:0:100:1\n").unwrap();
        assert_eq!(
            r,
            vec![TraceRecord::State(StateRecord {
                location: Location::new(1, 1, 2, 1),
                begin: 0,
                end: 100,
                state: STATE_RUNNING,
            })]
        );
    }

    #[test]
    fn comm_line() {
        let r = records("3:1:1:1:1:100:100:1:1:2:1:200:200:1024:7\n").unwrap();
        let c = r[0].as_comm().unwrap();
        assert_eq!((c.size, c.tag, c.physical_send, c.physical_recv), (1024, 7, 100, 200));
        assert_eq!(c.send.task, 1);
        assert_eq!(c.recv.task, 2);
    }

    #[test]
    fn packed_and_unpacked_events() {
        let r = records("2:0:1:1:1:5:10:1:11:2\n2:0:1:1:1:5:12:3\n").unwrap();
        assert_eq!(r[0].as_event().unwrap().pairs, vec![(10, 1), (11, 2)]);
        assert_eq!(r[1].as_event().unwrap().pairs, vec![(12, 3)]);
    }

    #[test]
    fn unknown_kind_reports_line() {
        let e = records("1:1:1:2:1:0:100:1\n4:1:1:1:1:1\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert_eq!(e.to_string(), ".prv: unknown record type 4 at line 3");
    }

    #[test]
    fn field_errors() {
        assert!(records("1:1:1:2:1:0:100\n").unwrap_err().message.contains("fields"));
        assert!(records("1:1:1:x:1:0:100:1\n").unwrap_err().message.contains("non-numeric"));
        assert!(records("2:0:1:1:1:5\n").is_err());
        assert!(records("2:0:1:1:1:5:10\n").is_err());
        assert!(records("1:1:1:2:1:0:-5:1\n").is_err());
        assert!(records("2:0:1:1:1:5:99999999999:1\n").is_err());
    }

    #[test]
    fn missing_or_bad_header() {
        assert_eq!(parse_prv(b"", Execution::Sequential).unwrap_err().line, 1);
        assert_eq!(
            parse_prv(b"1:1:1:1:1:0:1:1\n", Execution::Sequential)
                .unwrap_err()
                .line,
            1
        );
    }

    #[test]
    fn pcf_blocks() {
        let pcf = "DEFAULT_OPTIONS\n\nLEVEL THREAD\nUNITS NANOSEC\n\nSTATES\n0    Idle\n1    Running\n\n\
                   EVENT_TYPE\n0    84210    Vector length\n\n\
                   EVENT_TYPE\n0    50000001    MPI call\n0    50000002    MPI coll\nVALUES\n0    End\n1    MPI_Waitany\n\n";
        let (states, reg) = parse_pcf(pcf.as_bytes()).unwrap();
        assert_eq!(states.get(&1).map(String::as_str), Some("Running"));
        assert_eq!(reg.description(84210), Some("Vector length"));
        assert_eq!(reg.value_label(50000001, 1), Some("MPI_Waitany"));
        assert_eq!(reg.value_label(50000002, 0), Some("End"));
        assert_eq!(reg.value_label(84210, 0), None);
    }

    #[test]
    fn pcf_errors() {
        assert_eq!(parse_pcf(b"STATES\nzero Idle\n").unwrap_err().line, 2);
        assert_eq!(parse_pcf(b"VALUES\n0 End\n").unwrap_err().line, 1);
        assert_eq!(parse_pcf(b"EVENT_TYPE\n0 x label\n").unwrap_err().line, 2);
    }

    #[test]
    fn row_levels() {
        let row = "LEVEL CPU SIZE 2\ncpu1\ncpu2\n\nLEVEL NODE SIZE 1\nnode1\n\nLEVEL THREAD SIZE 2\nTHREAD 1.1.1\nTHREAD 1.2.1\n";
        let rows = parse_row(row.as_bytes()).unwrap();
        assert_eq!(rows.node, vec!["node1"]);
        assert!(rows.task.is_empty());
        assert_eq!(rows.thread.len(), 2);
        assert_eq!(parse_row(b"LEVEL NODE SIZE 3\nn1\n").unwrap_err().line, 1);
    }
}
