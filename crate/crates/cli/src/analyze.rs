use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};

use prvkit_core::analysis::{
    call_timeline, connectivity_matrix, export_csv, export_svg, marker_window, node_bandwidth,
    parallelism, routine_time_fractions, ParallelismOptions, Report, SvgStyle, Window,
};
use prvkit_core::config::TracerConfig;
use prvkit_core::prv::parse_bundle;
use prvkit_core::record::EventType;
use prvkit_core::synth::WORKLOAD_EVENT_TYPE;
use prvkit_core::{validate_bundle, TraceBundle};

use crate::{AnalyzeArgs, Kind, WindowArg};

struct Options {
    bin: u64,
    window: Option<Window>,
    event_type: EventType,
    idle_inside_routine: bool,
    link_bandwidth: Option<f64>,
}

fn resolve_window(bundle: &TraceBundle, arg: Option<WindowArg>) -> Result<Option<Window>> {
    match arg {
        None => Ok(None),
        Some(WindowArg::Workload) => marker_window(bundle, WORKLOAD_EVENT_TYPE)
            .map(Some)
            .context("the trace has no workload marker; pass --window t0:t1"),
        Some(WindowArg::Range(w)) => Ok(Some(w)),
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}%", x * 100.0)
}

/// Runs `kind` and returns the result with a printable summary.
fn compute(kind: Kind, bundle: &TraceBundle, o: &Options) -> Result<(Box<dyn Report>, String)> {
    let mut s = String::new();
    let result: Box<dyn Report> = match kind {
        Kind::Parallelism => {
            let series = parallelism(
                bundle,
                &ParallelismOptions {
                    bin_width: o.bin,
                    window: o.window,
                    idle_inside_routine: o.idle_inside_routine.then_some(o.event_type),
                },
            )?;
            writeln!(
                s,
                "instantaneous parallelism over {} bins of {} ns: max {:.3}, min {:.3}, mean {:.3} tasks",
                series.values.len(),
                series.bin_width,
                series.max(),
                series.min(),
                series.mean()
            )?;
            Box::new(series)
        }
        Kind::Timeline => {
            let mut t = call_timeline(bundle, o.event_type)?;
            for (k, i) in t.open_blocks() {
                writeln!(s, "warning: {} on thread {k} still open at end of trace (from {} ns)", t.label(i.code), i.begin)?;
            }
            if let Some(w) = o.window {
                t = t.clipped(w);
            }
            writeln!(s, "{:<24} {:>10} {:>16}", "routine", "blocks", "time (ns)")?;
            for code in t.codes() {
                let blocks: Vec<_> = t.rows.values().flatten().filter(|i| i.code == code).collect();
                let total: u64 = blocks.iter().map(|i| i.duration()).sum();
                writeln!(s, "{:<24} {:>10} {:>16}", t.label(code), blocks.len(), total)?;
            }
            Box::new(t)
        }
        Kind::Connectivity => {
            let m = connectivity_matrix(bundle)?;
            let populated = m.populated();
            writeln!(s, "{} messages, {} populated cells of {}", m.total(), populated.len(), m.len() * m.len())?;
            if m.len() <= 32 {
                for row in &m.counts {
                    let cells: Vec<String> = row.iter().map(|c| format!("{c:>5}")).collect();
                    writeln!(s, "{}", cells.join(""))?;
                }
            }
            Box::new(m)
        }
        Kind::Fractions => {
            let f = routine_time_fractions(bundle, o.event_type, o.window)?;
            writeln!(s, "window [{}, {}) ns, {} tasks", f.window.start, f.window.end, f.tasks.len())?;
            writeln!(s, "{:<24} {:>8} {:>8} {:>8}", "routine", "mean", "min", "max")?;
            for r in &f.rows {
                writeln!(s, "{:<24} {:>8} {:>8} {:>8}", r.label, pct(r.mean), pct(r.min), pct(r.max))?;
            }
            Box::new(f)
        }
        Kind::Bandwidth => {
            let b = node_bandwidth(bundle, o.bin, o.window)?;
            for (series, bytes) in b.series.iter().zip(&b.bytes) {
                writeln!(
                    s,
                    "{}: peak {:.2} MB/s, mean {:.2} MB/s, {} bytes",
                    series.label,
                    series.max(),
                    series.mean(),
                    bytes
                )?;
            }
            if let Some(link) = o.link_bandwidth {
                writeln!(s, "theoretical peak {:.2} MB/s; observed peak is {} of it", link / 1e6, pct(b.peak() * 1e6 / link))?;
            }
            Box::new(b)
        }
    };
    Ok((result, s))
}

fn kind_name(kind: Kind) -> &'static str {
    match kind {
        Kind::Parallelism => "parallelism",
        Kind::Timeline => "timeline",
        Kind::Connectivity => "connectivity",
        Kind::Fractions => "fractions",
        Kind::Bandwidth => "bandwidth",
    }
}

fn style(kind: Kind) -> SvgStyle {
    SvgStyle {
        title: Some(kind_name(kind).to_string()),
        ..Default::default()
    }
}

fn routine_type() -> Result<EventType> {
    Ok(TracerConfig::from_env()?.routine_event_type)
}

pub fn run(args: &AnalyzeArgs) -> Result<ExitCode> {
    let bundle = parse_bundle(&args.base)
        .with_context(|| format!("reading {}", args.base.display()))?;
    let options = Options {
        bin: args.bin,
        window: resolve_window(&bundle, args.window)?,
        event_type: match args.event_type {
            Some(t) => t,
            None => routine_type()?,
        },
        idle_inside_routine: args.derive_states_from_routine_events,
        link_bandwidth: None,
    };
    let (result, summary) = compute(args.kind, &bundle, &options)?;
    print!("{summary}");
    if let Some(p) = &args.csv {
        export_csv(result.as_ref(), p).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &args.svg {
        export_svg(result.as_ref(), p, &style(args.kind))
            .with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn sibling(base: &Path, name: &str, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(format!(".{name}.{ext}"));
    PathBuf::from(s)
}

/// Reads the bundle at `base` back, validates it and writes every analysis
/// over the workload window next to it.
pub fn full_report(base: &Path, bin: u64, link_bandwidth: f64) -> Result<()> {
    let bundle = parse_bundle(base)?;
    let report = validate_bundle(&bundle);
    if !report.is_empty() {
        bail!("generated bundle does not validate:\n{report}");
    }
    let options = Options {
        bin,
        window: marker_window(&bundle, WORKLOAD_EVENT_TYPE),
        event_type: routine_type()?,
        idle_inside_routine: false,
        link_bandwidth: Some(link_bandwidth),
    };
    for kind in [
        Kind::Parallelism,
        Kind::Timeline,
        Kind::Connectivity,
        Kind::Fractions,
        Kind::Bandwidth,
    ] {
        let (result, summary) = compute(kind, &bundle, &options)?;
        println!("== {}", kind_name(kind));
        print!("{summary}");
        export_csv(result.as_ref(), sibling(base, kind_name(kind), "csv"))?;
        export_svg(result.as_ref(), sibling(base, kind_name(kind), "svg"), &style(kind))?;
    }
    Ok(())
}
