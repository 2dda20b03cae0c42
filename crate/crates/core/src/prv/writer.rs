use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::record::{canonical_order, TraceRecord};

use super::{bundle_paths, format_header, validate_bundle, FormatError, TraceBundle};

/// Description given to event types that were emitted but never registered.
pub const UNREGISTERED_PREFIX: &str = "Unregistered type";

fn write_record(out: &mut impl Write, r: &TraceRecord) -> io::Result<()> {
    match r {
        TraceRecord::State(s) => {
            let l = &s.location;
            writeln!(
                out,
                "1:{}:{}:{}:{}:{}:{}:{}",
                l.cpu, l.appl, l.task, l.thread, s.begin, s.end, s.state
            )
        }
        TraceRecord::Event(e) => {
            let l = &e.location;
            write!(out, "2:{}:{}:{}:{}:{}", l.cpu, l.appl, l.task, l.thread, e.time)?;
            for (t, v) in &e.pairs {
                write!(out, ":{t}:{v}")?;
            }
            writeln!(out)
        }
        TraceRecord::Comm(c) => {
            let (s, r) = (&c.send, &c.recv);
            writeln!(
                out,
                "3:{}:{}:{}:{}:{}:{}:{}:{}:{}:{}:{}:{}:{}:{}",
                s.cpu,
                s.appl,
                s.task,
                s.thread,
                c.logical_send,
                c.physical_send,
                r.cpu,
                r.appl,
                r.task,
                r.thread,
                c.logical_recv,
                c.physical_recv,
                c.size,
                c.tag
            )
        }
    }
}

/// Writes the header and all records in canonical order.
pub fn write_prv(bundle: &TraceBundle, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "{}", format_header(&bundle.header))?;
    let mut order: Vec<&TraceRecord> = bundle.records.iter().collect();
    order.sort_by(|a, b| canonical_order(a, b));
    for r in order {
        write_record(out, r)?;
    }
    Ok(())
}

/// Writes the STATES block and one EVENT_TYPE block per type.
///
/// Types that appear in events but not in the registry get an
/// "Unregistered type N" description and a warning.
pub fn write_pcf(bundle: &TraceBundle, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "STATES")?;
    for (code, label) in &bundle.states {
        writeln!(out, "{code}    {label}")?;
    }
    writeln!(out)?;

    let unregistered: BTreeSet<u32> = bundle
        .records
        .iter()
        .filter_map(TraceRecord::as_event)
        .flat_map(|e| e.pairs.iter().map(|&(t, _)| t))
        .filter(|t| !bundle.registry.contains(*t))
        .collect();
    if !unregistered.is_empty() {
        log::warn!(
            "{} event type(s) emitted without registration: {:?}",
            unregistered.len(),
            unregistered
        );
    }

    type Block<'a> = (u32, String, Vec<(u64, &'a str)>);
    let mut types: Vec<Block> = bundle
        .registry
        .iter()
        .map(|(code, info)| {
            let values = info.values.iter().map(|(v, l)| (*v, l.as_str())).collect();
            (code, info.description.clone(), values)
        })
        .collect();
    types.extend(
        unregistered
            .into_iter()
            .map(|t| (t, format!("{UNREGISTERED_PREFIX} {t}"), Vec::new())),
    );
    types.sort_by_key(|t| t.0);

    for (code, description, values) in types {
        writeln!(out, "EVENT_TYPE")?;
        writeln!(out, "0    {code}    {description}")?;
        if !values.is_empty() {
            writeln!(out, "VALUES")?;
            for (v, label) in values {
                writeln!(out, "{v}    {label}")?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_row(bundle: &TraceBundle, out: &mut impl Write) -> io::Result<()> {
    let rows = &bundle.rows;
    for (i, (level, names)) in [("NODE", &rows.node), ("TASK", &rows.task), ("THREAD", &rows.thread)]
        .into_iter()
        .enumerate()
    {
        if i > 0 {
            writeln!(out)?;
        }
        writeln!(out, "LEVEL {level} SIZE {}", names.len())?;
        for n in names {
            writeln!(out, "{n}")?;
        }
    }
    Ok(())
}

fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> Result<(), FormatError> {
    let io_err = |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    f(&mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Validates `bundle` and writes `base.prv`, `base.pcf` and `base.row`.
pub fn write_bundle(bundle: &TraceBundle, base: impl AsRef<Path>) -> Result<(), FormatError> {
    let report = validate_bundle(bundle);
    if !report.is_empty() {
        return Err(FormatError::Invalid(report));
    }
    let (prv, pcf, row) = bundle_paths(base);
    write_file(&prv, |w| write_prv(bundle, w))?;
    write_file(&pcf, |w| write_pcf(bundle, w))?;
    write_file(&row, |w| write_row(bundle, w))?;
    Ok(())
}
