use super::{AnalysisError, Bins, TimeSeries, Window};
use crate::exec::Execution;
use crate::prv::TraceBundle;
use crate::record::{CommRecord, TraceRecord};

/// Per-node bandwidth in MB/s (1 MB = 10^6 bytes).
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthReport {
    /// One series per node, in node order.
    pub series: Vec<TimeSeries>,
    /// Bytes attributed to each node inside the window.
    pub bytes: Vec<u64>,
}

impl BandwidthReport {
    pub fn peak(&self) -> f64 {
        self.series.iter().map(TimeSeries::max).fold(0.0, f64::max)
    }
}

/// Bytes of `c` falling in `[a, b)` when spread uniformly over the flight
/// time. Summing over a partition of the flight time yields exactly `size`.
fn bytes_between(c: &CommRecord, a: u64, b: u64) -> u64 {
    let (s, r) = (c.physical_send, c.physical_recv);
    let cum = |x: u64| -> u128 {
        let x = x.clamp(s, r);
        c.size as u128 * (x - s) as u128 / (r - s) as u128
    };
    (cum(b) - cum(a)) as u64
}

pub fn node_bandwidth(
    bundle: &TraceBundle,
    bin_width: u64,
    window: Option<Window>,
) -> Result<BandwidthReport, AnalysisError> {
    node_bandwidth_with(bundle, bin_width, window, Execution::default())
}

/// Each message counts towards the nodes of its sender and receiver, once
/// when both are on the same node.
pub fn node_bandwidth_with(
    bundle: &TraceBundle,
    bin_width: u64,
    window: Option<Window>,
    exec: Execution,
) -> Result<BandwidthReport, AnalysisError> {
    let w = window.unwrap_or_else(|| Window::full(bundle));
    let bins = Bins::new(Window::new(w.start, w.end)?, bin_width)?;
    let process = bundle.process();
    let nodes = bundle.resources().nodes.len();
    let nb = bins.count();
    let node_of = |appl: u32, task: u32| {
        process
            .task(appl, task)
            .map(|t| t.node as usize - 1)
            .filter(|&n| n < nodes)
    };

    let comms: Vec<&CommRecord> = bundle.records.iter().filter_map(TraceRecord::as_comm).collect();
    let acc = exec.fold_chunks(
        &comms,
        4096,
        vec![0u64; nodes * nb],
        |chunk| {
            let mut acc = vec![0u64; nodes * nb];
            for c in chunk {
                let mut targets = [node_of(c.send.appl, c.send.task), node_of(c.recv.appl, c.recv.task)];
                if targets[0] == targets[1] {
                    targets[1] = None;
                }
                let (s, r) = (c.physical_send, c.physical_recv);
                let mut add = |i: usize, bytes: u64| {
                    for n in targets.iter().flatten() {
                        acc[n * nb + i] += bytes;
                    }
                };
                if r <= s {
                    if let Some(i) = bins.index_of(s) {
                        add(i, c.size);
                    }
                    continue;
                }
                let Some((a, b)) = bins.window.clip(s, r) else {
                    continue;
                };
                let mut i = bins.index_of(a).expect("clipped start lies in the window");
                let mut t = a;
                while t < b {
                    let e = bins.end(i).min(b);
                    add(i, bytes_between(c, t, e));
                    t = e;
                    i += 1;
                }
            }
            acc
        },
        |mut x, y| {
            x.iter_mut().zip(y).for_each(|(x, y)| *x += y);
            x
        },
    );

    let names = &bundle.rows.node;
    let series = (0..nodes)
        .map(|n| TimeSeries {
            label: names.get(n).cloned().unwrap_or_else(|| format!("node{}", n + 1)),
            units: "MB/s".into(),
            origin: bins.window.start,
            bin_width,
            end: bins.window.end,
            values: (0..nb)
                .map(|i| acc[n * nb + i] as f64 * 1e3 / (bins.end(i) - bins.start(i)) as f64)
                .collect(),
        })
        .collect();
    let bytes = (0..nodes).map(|n| acc[n * nb..(n + 1) * nb].iter().sum()).collect();
    Ok(BandwidthReport { series, bytes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::testutil::{bundle, loc};
    use crate::model::{build_model, Location};
    use crate::prv::{CaptureTime, Header};
    use proptest::prelude::*;

    fn msg(send: Location, recv: Location, ps: u64, pr: u64, size: u64) -> TraceRecord {
        CommRecord {
            send,
            recv,
            logical_send: ps,
            physical_send: ps,
            logical_recv: pr,
            physical_recv: pr,
            size,
            tag: 0,
        }
        .into()
    }

    #[test]
    fn no_messages() {
        let r = node_bandwidth(&bundle(2, 1, 100), 10, None).unwrap();
        assert_eq!(r.series.len(), 1);
        assert_eq!(r.series[0].values, vec![0.0; 10]);
    }

    #[test]
    fn one_mebibyte_over_ten_ms() {
        let mut b = bundle(2, 1, 10_000_000);
        b.records = vec![msg(loc(1, 1), loc(2, 1), 0, 10_000_000, 1_048_576)];
        let r = node_bandwidth(&b, 10_000_000, None).unwrap();
        assert!((r.series[0].values[0] - 104.8576).abs() < 1e-9);

        // Oracle: 1-µs slices, each carrying size / 10^4 bytes.
        let per_us = 1_048_576f64 / 10_000.0;
        let mb_per_s = (0..10_000).map(|_| per_us).sum::<f64>() / 0.01 / 1e6;
        assert!((r.series[0].values[0] - mb_per_s).abs() / mb_per_s < 1e-9);
    }

    #[test]
    fn zero_duration_goes_to_containing_bin() {
        let mut b = bundle(2, 1, 100);
        b.records = vec![msg(loc(1, 1), loc(2, 1), 35, 35, 500)];
        let r = node_bandwidth(&b, 10, None).unwrap();
        assert_eq!(r.bytes, vec![500]);
        assert_eq!(r.series[0].values[3], 500.0 * 1e3 / 10.0);
    }

    #[test]
    fn inter_node_message_counts_on_both_nodes() {
        let process = build_model(&[2], &[1, 1], &[1, 2], &[1, 1]).unwrap();
        let mut b = TraceBundle::new(Header {
            capture: CaptureTime::default(),
            total_time: 100,
            resources: process.1,
            process: process.0,
        });
        b.records = vec![msg(loc(1, 1), loc(2, 1), 0, 100, 1000)];
        let r = node_bandwidth(&b, 50, None).unwrap();
        assert_eq!(r.bytes, vec![1000, 1000]);
        assert_eq!(r.series[1].values, vec![10_000.0, 10_000.0]);
    }

    proptest! {
        #[test]
        fn conserves_bytes(
            msgs in prop::collection::vec((0u64..1000, 0u64..300, 0u64..1_000_000), 0..40),
            bin in 1u64..400,
        ) {
            let mut b = bundle(2, 1, 1300);
            b.records = msgs.iter().map(|&(s, d, size)| msg(loc(1, 1), loc(2, 1), s, s + d, size)).collect();
            let seq = node_bandwidth_with(&b, bin, None, Execution::Sequential).unwrap();
            let par = node_bandwidth_with(&b, bin, None, Execution::Parallel).unwrap();
            prop_assert_eq!(&seq, &par);
            let total: u64 = msgs.iter().map(|m| m.2).sum();
            prop_assert_eq!(seq.bytes[0], total);
            let s = &seq.series[0];
            let from_values: f64 = (0..s.values.len()).map(|i| s.values[i] * s.width(i) as f64 / 1e3).sum();
            prop_assert!((from_values - total as f64).abs() < 1e-6 * (total as f64).max(1.0));
        }
    }
}
