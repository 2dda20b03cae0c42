use super::AnalysisError;
use crate::exec::Execution;
use crate::prv::TraceBundle;
use crate::record::{CommRecord, TraceRecord};

/// Message counts from sender task (row) to receiver task (column).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl CountMatrix {
    pub fn zeros(labels: Vec<String>) -> Self {
        let n = labels.len();
        CountMatrix {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, from: usize, to: usize) -> u64 {
        self.counts[from][to]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Nonzero cells as (sender, receiver, count).
    pub fn populated(&self) -> Vec<(usize, usize, u64)> {
        let mut out = Vec::new();
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c > 0 {
                    out.push((i, j, c));
                }
            }
        }
        out
    }
}

pub fn connectivity_matrix(bundle: &TraceBundle) -> Result<CountMatrix, AnalysisError> {
    connectivity_matrix_with(bundle, Execution::default())
}

pub fn connectivity_matrix_with(
    bundle: &TraceBundle,
    exec: Execution,
) -> Result<CountMatrix, AnalysisError> {
    let process = bundle.process();
    let n = process.task_count();
    let labels: Vec<String> = process
        .tasks()
        .enumerate()
        .map(|(i, (a, t))| {
            bundle
                .rows
                .task
                .get(i)
                .cloned()
                .unwrap_or_else(|| format!("TASK {a}.{t}"))
        })
        .collect();
    let comms: Vec<&CommRecord> = bundle.records.iter().filter_map(TraceRecord::as_comm).collect();
    let flat = exec.fold_chunks(
        &comms,
        4096,
        vec![0u64; n * n],
        |chunk| {
            let mut acc = vec![0u64; n * n];
            for c in chunk {
                let from = process.task_index(c.send.appl, c.send.task);
                let to = process.task_index(c.recv.appl, c.recv.task);
                match (from, to) {
                    (Some(x), Some(y)) => acc[x * n + y] += 1,
                    _ => log::warn!("communication {} -> {} outside the process model", c.send, c.recv),
                }
            }
            acc
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(a, b)| *a += b);
            a
        },
    );
    let mut m = CountMatrix::zeros(labels);
    for (i, row) in m.counts.iter_mut().enumerate() {
        row.copy_from_slice(&flat[i * n..(i + 1) * n]);
    }
    Ok(m)
}
