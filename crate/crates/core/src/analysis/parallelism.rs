use std::collections::BTreeMap;

use super::intervals::{merge, subtract};
use super::timeline::thread_blocks;
use super::{AnalysisError, Bins, TimeSeries, Window, DEFAULT_BIN_NS};
use crate::exec::Execution;
use crate::model::ThreadKey;
use crate::prv::TraceBundle;
use crate::record::{EventType, TraceRecord, STATE_IDLE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelismOptions {
    pub bin_width: u64,
    /// Defaults to the whole trace.
    pub window: Option<Window>,
    /// Treat time inside nonzero blocks of this event type as Idle.
    pub idle_inside_routine: Option<EventType>,
}

impl Default for ParallelismOptions {
    fn default() -> Self {
        ParallelismOptions {
            bin_width: DEFAULT_BIN_NS,
            window: None,
            idle_inside_routine: None,
        }
    }
}

/// Time-weighted average number of non-idle tasks per bin over the whole
/// trace. A task is non-idle while any of its threads is in a state other
/// than Idle.
pub fn instantaneous_parallelism(
    bundle: &TraceBundle,
    bin_width: u64,
) -> Result<TimeSeries, AnalysisError> {
    parallelism(
        bundle,
        &ParallelismOptions {
            bin_width,
            ..Default::default()
        },
    )
}

pub fn parallelism(
    bundle: &TraceBundle,
    options: &ParallelismOptions,
) -> Result<TimeSeries, AnalysisError> {
    parallelism_with(bundle, options, Execution::default())
}

pub fn parallelism_with(
    bundle: &TraceBundle,
    options: &ParallelismOptions,
    exec: Execution,
) -> Result<TimeSeries, AnalysisError> {
    let window = match options.window {
        Some(w) => Window::new(w.start, w.end)?,
        None => Window::new(0, bundle.total_time())?,
    };
    let bins = Bins::new(window, options.bin_width)?;

    let mut states: BTreeMap<ThreadKey, Vec<(u64, u64)>> = BTreeMap::new();
    let mut any_state = false;
    for s in bundle.records.iter().filter_map(TraceRecord::as_state) {
        any_state = true;
        if s.state != STATE_IDLE {
            states.entry(s.location.key()).or_default().push((s.begin, s.end));
        }
    }
    if !any_state {
        return Err(AnalysisError::EmptySeries);
    }
    let mut routines = match options.idle_inside_routine {
        Some(ty) => thread_blocks(bundle, ty, exec),
        None => BTreeMap::new(),
    };

    // Busy set per task: union over its threads of busy time.
    let mut per_task: BTreeMap<(u32, u32), Vec<(u64, u64)>> = BTreeMap::new();
    for (key, ivs) in states {
        let mut busy = merge(ivs);
        if let Some(blocks) = routines.remove(&key) {
            let blocks: Vec<(u64, u64)> = blocks.iter().map(|b| (b.begin, b.end)).collect();
            busy = subtract(&busy, &merge(blocks));
        }
        per_task.entry((key.appl, key.task)).or_default().extend(busy);
    }
    let tasks: Vec<Vec<(u64, u64)>> = per_task.into_values().collect();

    let n = bins.count();
    let acc = exec.fold_chunks(
        &tasks,
        1,
        vec![0u64; n],
        |chunk| {
            let mut acc = vec![0u64; n];
            for ivs in chunk {
                for (a, b) in merge(ivs.clone()) {
                    bins.add_interval(&mut acc, a, b);
                }
            }
            acc
        },
        |mut x, y| {
            x.iter_mut().zip(y).for_each(|(x, y)| *x += y);
            x
        },
    );

    Ok(TimeSeries {
        label: "Instantaneous parallelism".into(),
        units: "tasks".into(),
        origin: window.start,
        bin_width: options.bin_width,
        end: window.end,
        values: acc
            .iter()
            .enumerate()
            .map(|(i, &busy)| busy as f64 / (bins.end(i) - bins.start(i)) as f64)
            .collect(),
    })
}
