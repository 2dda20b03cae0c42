use std::collections::{BTreeMap, BTreeSet};

use super::{AnalysisError, Window};
use crate::exec::Execution;
use crate::model::ThreadKey;
use crate::prv::TraceBundle;
use crate::record::{EventType, EventValue, TraceRecord};

/// One block of a routine on one thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub begin: u64,
    pub end: u64,
    pub code: EventValue,
    /// Still open when the trace ended; closed at the end of the trace.
    pub open: bool,
}

impl Interval {
    pub fn duration(&self) -> u64 {
        self.end - self.begin
    }
}

/// Blocks per thread, in row order. Blocks of a row are disjoint and ordered.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalTimeline {
    pub event_type: EventType,
    pub total_time: u64,
    pub rows: BTreeMap<ThreadKey, Vec<Interval>>,
    pub labels: BTreeMap<EventValue, String>,
}

impl IntervalTimeline {
    pub fn label(&self, code: EventValue) -> String {
        self.labels
            .get(&code)
            .cloned()
            .unwrap_or_else(|| format!("{code}"))
    }

    /// Codes that occur in at least one block.
    pub fn codes(&self) -> BTreeSet<EventValue> {
        self.rows.values().flatten().map(|i| i.code).collect()
    }

    /// Blocks that had to be closed at the end of the trace.
    pub fn open_blocks(&self) -> Vec<(ThreadKey, Interval)> {
        self.rows
            .iter()
            .flat_map(|(k, v)| v.iter().filter(|i| i.open).map(move |i| (*k, *i)))
            .collect()
    }

    /// Share of `rows × window` covered by blocks of `codes`.
    pub fn coverage(&self, window: Window, codes: &[EventValue]) -> f64 {
        let covered: u64 = self
            .rows
            .values()
            .flatten()
            .filter(|i| codes.contains(&i.code))
            .map(|i| window.overlap(i.begin, i.end))
            .sum();
        covered as f64 / (window.len() as f64 * self.rows.len() as f64)
    }

    /// Blocks restricted to `window`.
    pub fn clipped(&self, window: Window) -> IntervalTimeline {
        let rows = self
            .rows
            .iter()
            .map(|(k, v)| {
                let v = v
                    .iter()
                    .filter_map(|i| {
                        window.clip(i.begin, i.end).map(|(begin, end)| Interval { begin, end, ..*i })
                    })
                    .collect();
                (*k, v)
            })
            .collect();
        IntervalTimeline { rows, ..self.clone() }
    }
}

/// Replays the events of `event_type` on each thread: a nonzero value opens
/// a block that the next event of that type closes; value 0 only closes.
pub(crate) fn thread_blocks(
    bundle: &TraceBundle,
    event_type: EventType,
    exec: Execution,
) -> BTreeMap<ThreadKey, Vec<Interval>> {
    let mut per_thread: BTreeMap<ThreadKey, Vec<(u64, EventValue)>> = BTreeMap::new();
    for e in bundle.records.iter().filter_map(TraceRecord::as_event) {
        for &(t, v) in &e.pairs {
            if t == event_type {
                per_thread.entry(e.location.key()).or_default().push((e.time, v));
            }
        }
    }
    let total = bundle.total_time();
    let threads: Vec<(ThreadKey, Vec<(u64, EventValue)>)> = per_thread.into_iter().collect();
    let blocks = exec.map(&threads, |(_, events)| {
        let mut events = events.clone();
        events.sort_by_key(|e| e.0);
        let mut out = Vec::new();
        let mut open: Option<(u64, EventValue)> = None;
        for (t, v) in events {
            if let Some((begin, code)) = open.take() {
                out.push(Interval { begin, end: t, code, open: false });
            }
            if v != 0 {
                open = Some((t, v));
            }
        }
        if let Some((begin, code)) = open {
            out.push(Interval { begin, end: total.max(begin), code, open: true });
        }
        out
    });
    threads.into_iter().map(|(k, _)| k).zip(blocks).collect()
}

pub fn call_timeline(
    bundle: &TraceBundle,
    event_type: EventType,
) -> Result<IntervalTimeline, AnalysisError> {
    call_timeline_with(bundle, event_type, Execution::default())
}

/// Routine blocks of `event_type` per thread. Every thread of the process
/// model gets a row.
pub fn call_timeline_with(
    bundle: &TraceBundle,
    event_type: EventType,
    exec: Execution,
) -> Result<IntervalTimeline, AnalysisError> {
    let mut found = thread_blocks(bundle, event_type, exec);
    if found.is_empty() && !bundle.registry.contains(event_type) {
        return Err(AnalysisError::UnknownEventType(event_type));
    }
    let mut rows: BTreeMap<ThreadKey, Vec<Interval>> =
        bundle.process().threads().map(|k| (k, Vec::new())).collect();
    rows.append(&mut found);
    let labels = bundle
        .registry
        .get(event_type)
        .map(|info| info.values.clone())
        .unwrap_or_default();
    let timeline = IntervalTimeline {
        event_type,
        total_time: bundle.total_time(),
        rows,
        labels,
    };
    for (k, i) in timeline.open_blocks() {
        log::warn!(
            "thread {k}: block {} opened at {} still open at end of trace",
            timeline.label(i.code),
            i.begin
        );
    }
    Ok(timeline)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutineRow {
    pub code: EventValue,
    pub label: String,
    /// Time inside the routine per task, summed over its threads.
    pub ns: Vec<u64>,
    pub fractions: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// First quartile, median and third quartile.
    pub quartiles: [f64; 3],
}

/// Per-task share of the window spent in each routine.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutineStats {
    pub event_type: EventType,
    pub window: Window,
    /// Task labels, in row order.
    pub tasks: Vec<String>,
    /// Denominator per task: window length × thread count.
    pub capacity: Vec<u64>,
    pub rows: Vec<RoutineRow>,
}

impl RoutineStats {
    pub fn row(&self, code: EventValue) -> Option<&RoutineRow> {
        self.rows.iter().find(|r| r.code == code)
    }

    pub fn row_by_label(&self, label: &str) -> Option<&RoutineRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Time outside any routine per task.
    pub fn outside_ns(&self) -> Vec<u64> {
        (0..self.tasks.len())
            .map(|i| self.capacity[i] - self.rows.iter().map(|r| r.ns[i]).sum::<u64>())
            .collect()
    }
}

/// Linear interpolation between closest ranks.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn routine_time_fractions(
    bundle: &TraceBundle,
    event_type: EventType,
    window: Option<Window>,
) -> Result<RoutineStats, AnalysisError> {
    routine_time_fractions_with(bundle, event_type, window, Execution::default())
}

pub fn routine_time_fractions_with(
    bundle: &TraceBundle,
    event_type: EventType,
    window: Option<Window>,
    exec: Execution,
) -> Result<RoutineStats, AnalysisError> {
    let w = window.unwrap_or_else(|| Window::full(bundle));
    let window = Window::new(w.start, w.end)?;
    let timeline = call_timeline_with(bundle, event_type, exec)?;
    let process = bundle.process();
    let tasks: Vec<(u32, u32)> = process.tasks().collect();
    let index: BTreeMap<(u32, u32), usize> =
        tasks.iter().enumerate().map(|(i, t)| (*t, i)).collect();

    let mut ns: BTreeMap<EventValue, Vec<u64>> = BTreeMap::new();
    for (key, blocks) in &timeline.rows {
        let Some(&i) = index.get(&(key.appl, key.task)) else {
            continue;
        };
        for b in blocks {
            ns.entry(b.code).or_insert_with(|| vec![0; tasks.len()])[i] +=
                window.overlap(b.begin, b.end);
        }
    }
    let capacity: Vec<u64> = tasks
        .iter()
        .map(|&(a, t)| window.len() * process.task(a, t).map_or(1, |t| t.threads) as u64)
        .collect();

    let rows = ns
        .into_iter()
        .map(|(code, ns)| {
            let fractions: Vec<f64> = ns
                .iter()
                .zip(&capacity)
                .map(|(&n, &c)| n as f64 / c as f64)
                .collect();
            let mut sorted = fractions.clone();
            sorted.sort_by(f64::total_cmp);
            RoutineRow {
                code,
                label: timeline.label(code),
                mean: fractions.iter().sum::<f64>() / fractions.len() as f64,
                min: sorted.first().copied().unwrap_or(f64::NAN),
                max: sorted.last().copied().unwrap_or(f64::NAN),
                quartiles: [0.25, 0.5, 0.75].map(|q| quantile(&sorted, q)),
                ns,
                fractions,
            }
        })
        .collect();

    let labels = &bundle.rows.task;
    Ok(RoutineStats {
        event_type,
        window,
        tasks: tasks
            .iter()
            .enumerate()
            .map(|(i, (a, t))| labels.get(i).cloned().unwrap_or_else(|| format!("TASK {a}.{t}")))
            .collect(),
        capacity,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::testutil::{bundle, loc};
    use crate::record::EventRecord;
    use proptest::prelude::*;

    const R: EventType = 50000001;

    fn ev(task: u32, time: u64, v: u64) -> TraceRecord {
        EventRecord {
            location: loc(task, 1),
            time,
            pairs: vec![(R, v)],
        }
        .into()
    }

    #[test]
    fn single_block() {
        let mut b = bundle(1, 1, 100);
        b.records = vec![ev(1, 10, 3), ev(1, 40, 0)];
        let t = call_timeline(&b, R).unwrap();
        assert_eq!(
            t.rows[&loc(1, 1).key()],
            vec![Interval { begin: 10, end: 40, code: 3, open: false }]
        );
    }

    #[test]
    fn back_to_back_blocks_and_labels() {
        let mut b = bundle(1, 1, 100);
        b.registry.register(R, "MPI call", &[(3, "MPI_Send"), (5, "MPI_Recv")]).unwrap();
        b.records = vec![ev(1, 10, 3), ev(1, 40, 5), ev(1, 90, 0)];
        let t = call_timeline(&b, R).unwrap();
        let row = &t.rows[&loc(1, 1).key()];
        assert_eq!(
            row.iter().map(|i| (i.begin, i.end, i.code)).collect::<Vec<_>>(),
            vec![(10, 40, 3), (40, 90, 5)]
        );
        assert_eq!(t.label(5), "MPI_Recv");
        assert_eq!(t.label(9), "9");
    }

    #[test]
    fn open_block_closed_at_end() {
        let mut b = bundle(2, 1, 100);
        b.records = vec![ev(1, 10, 3)];
        let t = call_timeline(&b, R).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.open_blocks(), vec![(loc(1, 1).key(), Interval { begin: 10, end: 100, code: 3, open: true })]);
    }

    #[test]
    fn unknown_type() {
        let b = bundle(1, 1, 100);
        assert!(matches!(call_timeline(&b, R), Err(AnalysisError::UnknownEventType(R))));
    }

    #[test]
    fn coincident_events_give_zero_length_block() {
        let mut b = bundle(1, 1, 100);
        b.records = vec![ev(1, 10, 3), ev(1, 10, 4), ev(1, 20, 0)];
        let t = call_timeline(&b, R).unwrap();
        let row = &t.rows[&loc(1, 1).key()];
        assert_eq!(row[0].duration(), 0);
        let f = routine_time_fractions(&b, R, None).unwrap();
        assert_eq!(f.row(3).unwrap().ns, vec![0]);
        assert_eq!(f.row(4).unwrap().ns, vec![10]);
    }

    #[test]
    fn full_trace_routine() {
        let mut b = bundle(1, 1, 100);
        b.records = vec![ev(1, 0, 1), ev(1, 100, 0)];
        let f = routine_time_fractions(&b, R, None).unwrap();
        let r = f.row(1).unwrap();
        assert_eq!((r.mean, r.min, r.max), (1.0, 1.0, 1.0));
    }

    #[test]
    fn two_tasks_dispersion() {
        let mut b = bundle(2, 1, 100);
        b.records = vec![ev(1, 0, 1), ev(1, 50, 0), ev(2, 10, 1), ev(2, 80, 0)];
        let f = routine_time_fractions(&b, R, None).unwrap();
        let r = f.row(1).unwrap();
        assert_eq!(r.fractions, vec![0.5, 0.7]);
        assert!((r.mean - 0.6).abs() < 1e-12);
        assert_eq!((r.min, r.max), (0.5, 0.7));
        assert!((r.quartiles[1] - 0.6).abs() < 1e-12);
        assert_eq!(f.outside_ns(), vec![50, 30]);
    }

    #[test]
    fn windowed_and_degenerate() {
        let mut b = bundle(1, 1, 100);
        b.records = vec![ev(1, 0, 1), ev(1, 50, 0)];
        let f = routine_time_fractions(&b, R, Some(Window { start: 25, end: 75 })).unwrap();
        assert_eq!(f.row(1).unwrap().fractions, vec![0.5]);
        assert!(matches!(
            routine_time_fractions(&b, R, Some(Window { start: 5, end: 5 })),
            Err(AnalysisError::DegenerateWindow { .. })
        ));
    }

    #[test]
    fn quantiles() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.25), 1.75);
        assert_eq!(quantile(&[7.0], 0.75), 7.0);
    }

    /// Replays the event list by hand, nanosecond by nanosecond.
    fn replay_oracle(events: &[(u64, u64)], total: u64) -> BTreeMap<u64, u64> {
        let mut out = BTreeMap::new();
        for t in 0..total {
            let mut current = 0;
            for &(et, v) in events {
                if et <= t {
                    current = v;
                }
            }
            if current != 0 {
                *out.entry(current).or_insert(0) += 1;
            }
        }
        out
    }

    proptest! {
        #[test]
        fn conservation_and_replay(
            raw in prop::collection::vec((0u64..200, 0u64..4), 0..15),
            w in (0u64..100, 100u64..200),
        ) {
            let mut events = raw.clone();
            events.sort_by_key(|e| e.0);
            events.dedup_by_key(|e| e.0);
            let mut b = bundle(1, 1, 200);
            b.registry.register(R, "MPI call", &[]).unwrap();
            b.records = events.iter().map(|&(t, v)| ev(1, t, v)).collect();
            let window = Window::new(w.0, w.1).unwrap();
            let f = routine_time_fractions_with(&b, R, Some(window), Execution::Sequential).unwrap();
            let inside: u64 = f.rows.iter().map(|r| r.ns[0]).sum();
            prop_assert_eq!(inside + f.outside_ns()[0], window.len());

            let full = routine_time_fractions(&b, R, None).unwrap();
            let oracle = replay_oracle(&events, 200);
            for r in &full.rows {
                prop_assert_eq!(r.ns[0], oracle.get(&r.code).copied().unwrap_or(0));
            }
        }
    }
}
