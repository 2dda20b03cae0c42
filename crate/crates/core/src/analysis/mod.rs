//! Analyses over a [`TraceBundle`]: instantaneous parallelism, call
//! timelines, connectivity, routine time fractions and node bandwidth.
//!
//! Every analysis is a pure function of the bundle and its parameters. The
//! `*_with` variants take an [`Execution`] and produce identical results for
//! both variants.

mod bandwidth;
mod connectivity;
mod export;
mod intervals;
mod parallelism;
mod timeline;

use thiserror::Error;

use crate::prv::TraceBundle;
use crate::record::{EventType, TraceRecord};

pub use bandwidth::{node_bandwidth, node_bandwidth_with, BandwidthReport};
pub use connectivity::{connectivity_matrix, connectivity_matrix_with, CountMatrix};
pub use export::{export_csv, export_svg, Report, SvgStyle};
pub use intervals::{merge, subtract};
pub use parallelism::{
    instantaneous_parallelism, parallelism, parallelism_with, ParallelismOptions,
};
pub use timeline::{
    call_timeline, call_timeline_with, routine_time_fractions, routine_time_fractions_with,
    Interval, IntervalTimeline, RoutineRow, RoutineStats,
};

/// Default bin width: 10 ms.
pub const DEFAULT_BIN_NS: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("bundle has no state records")]
    EmptySeries,
    #[error("event type {0} does not occur in the bundle")]
    UnknownEventType(EventType),
    #[error("degenerate window [{start}, {end})")]
    DegenerateWindow { start: u64, end: u64 },
    #[error("bin width must be positive")]
    ZeroBin,
    #[error("nothing to export")]
    EmptyResult,
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

/// Half-open time range `[start, end)` in ns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Window {
    pub start: u64,
    pub end: u64,
}

impl Window {
    pub fn new(start: u64, end: u64) -> Result<Self, AnalysisError> {
        if end <= start {
            return Err(AnalysisError::DegenerateWindow { start, end });
        }
        Ok(Window { start, end })
    }

    /// `[0, total_time)`.
    pub fn full(bundle: &TraceBundle) -> Self {
        Window {
            start: 0,
            end: bundle.total_time(),
        }
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Overlap of `[a, b)` with the window, if non-empty.
    pub fn clip(&self, a: u64, b: u64) -> Option<(u64, u64)> {
        let (a, b) = (a.max(self.start), b.min(self.end));
        (a < b).then_some((a, b))
    }

    pub fn overlap(&self, a: u64, b: u64) -> u64 {
        self.clip(a, b).map_or(0, |(a, b)| b - a)
    }

    /// Parses `t0:t1` in ns.
    pub fn parse(text: &str) -> Result<Self, String> {
        let (a, b) = text
            .split_once(':')
            .ok_or_else(|| format!("expected t0:t1, got {text:?}"))?;
        let num = |s: &str| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| format!("invalid time {s:?}"))
        };
        Window::new(num(a)?, num(b)?).map_err(|e| e.to_string())
    }
}

/// The span between the first nonzero and the following zero value of
/// `event_type`, anywhere in the trace. An unterminated span ends at the
/// end of the trace.
pub fn marker_window(bundle: &TraceBundle, event_type: EventType) -> Option<Window> {
    let mut start = None;
    for e in bundle.records.iter().filter_map(TraceRecord::as_event) {
        for &(t, v) in &e.pairs {
            if t != event_type {
                continue;
            }
            match (start, v) {
                (None, v) if v != 0 => start = Some(e.time),
                (Some(s), 0) => return Window::new(s, e.time).ok(),
                _ => {}
            }
        }
    }
    start.and_then(|s| Window::new(s, bundle.total_time()).ok())
}

/// Fixed-width bins over a window; the last bin may be narrower.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Bins {
    pub window: Window,
    pub width: u64,
}

impl Bins {
    pub fn new(window: Window, width: u64) -> Result<Self, AnalysisError> {
        if width == 0 {
            return Err(AnalysisError::ZeroBin);
        }
        Ok(Bins { window, width })
    }

    pub fn count(&self) -> usize {
        self.window.len().div_ceil(self.width) as usize
    }

    pub fn start(&self, i: usize) -> u64 {
        self.window.start + i as u64 * self.width
    }

    pub fn end(&self, i: usize) -> u64 {
        (self.start(i) + self.width).min(self.window.end)
    }

    /// Adds the per-bin overlap of `[a, b)` to `acc`.
    pub fn add_interval(&self, acc: &mut [u64], a: u64, b: u64) {
        let Some((a, b)) = self.window.clip(a, b) else {
            return;
        };
        let mut i = ((a - self.window.start) / self.width) as usize;
        let mut t = a;
        while t < b {
            let e = self.end(i).min(b);
            acc[i] += e - t;
            t = e;
            i += 1;
        }
    }

    pub fn index_of(&self, t: u64) -> Option<usize> {
        (t >= self.window.start && t < self.window.end)
            .then(|| ((t - self.window.start) / self.width) as usize)
    }
}

/// Values per bin over `[origin, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub label: String,
    pub units: String,
    pub origin: u64,
    pub bin_width: u64,
    pub end: u64,
    /// `ceil((end − origin) / bin_width)` entries.
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn bin_start(&self, i: usize) -> u64 {
        self.origin + i as u64 * self.bin_width
    }

    /// Effective width of bin `i`, narrower for a trailing partial bin.
    pub fn width(&self, i: usize) -> u64 {
        (self.bin_start(i) + self.bin_width).min(self.end) - self.bin_start(i)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Time-weighted mean over the whole series.
    pub fn mean(&self) -> f64 {
        let total: f64 = (0..self.values.len())
            .map(|i| self.values[i] * self.width(i) as f64)
            .sum();
        total / (self.end - self.origin) as f64
    }
}
