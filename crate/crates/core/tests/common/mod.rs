//! Generators shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use proptest::sample::Index;

use prvkit_core::model::{Application, Node, Task};
use prvkit_core::prv::{write_pcf, write_prv, write_row, CaptureTime, Header, RowLabels};
use prvkit_core::registry::default_state_table;
use prvkit_core::{
    CommRecord, EventRecord, Location, ProcessModel, ResourceModel, StateRecord, TraceBundle,
    TraceRecord,
};

/// Single-line labels without surrounding whitespace.
pub fn label() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_ .:-]{0,12}[a-z0-9_]"
}

fn models() -> impl Strategy<Value = (ProcessModel, ResourceModel)> {
    (
        prop::collection::vec(1u32..5, 1..4),
        prop::collection::vec(prop::collection::vec(1u32..4, 1..5), 1..3),
    )
        .prop_map(|(cpus, apps)| {
            let resources = ResourceModel {
                nodes: cpus.iter().map(|&cpus| Node { cpus }).collect(),
            };
            let mut k = 0;
            let applications = apps
                .iter()
                .map(|threads| Application {
                    tasks: threads
                        .iter()
                        .map(|&threads| {
                            k += 1;
                            Task {
                                threads,
                                node: (k % cpus.len() as u32) + 1,
                            }
                        })
                        .collect(),
                })
                .collect();
            (ProcessModel { applications }, resources)
        })
}

fn capture() -> impl Strategy<Value = CaptureTime> {
    (1u8..=31, 1u8..=12, 0u16..100, 0u8..24, 0u8..60).prop_map(|(day, month, year, hour, minute)| {
        CaptureTime {
            day,
            month,
            year,
            hour,
            minute,
        }
    })
}

type TypeSpec = (u32, String, Vec<(u64, String)>);

fn registry_spec() -> impl Strategy<Value = Vec<TypeSpec>> {
    prop::collection::btree_map(
        1u32..100_000_000,
        (label(), prop::collection::btree_map(0u64..40, label(), 0..4)),
        0..5,
    )
    .prop_map(|m| {
        m.into_iter()
            .map(|(code, (d, v))| (code, d, v.into_iter().collect()))
            .collect()
    })
}

type RawRecord = (u8, Index, Index, u32, [u64; 4], Index, Vec<(Index, u64)>, u64, u64);

fn raw_record() -> impl Strategy<Value = RawRecord> {
    (
        0u8..3,
        any::<Index>(),
        any::<Index>(),
        any::<u32>(),
        any::<[u64; 4]>(),
        any::<Index>(),
        prop::collection::vec((any::<Index>(), any::<u64>()), 1..4),
        any::<u64>(),
        any::<u64>(),
    )
}

/// Valid, canonically sorted bundles whose event types are all registered
/// and whose communications are all matched.
pub fn bundle() -> impl Strategy<Value = TraceBundle> {
    (models(), 1u64..1_000_000_000_000, capture(), registry_spec(), any::<bool>())
        .prop_flat_map(|((process, resources), total, capture, types, custom_states)| {
            let threads = process.thread_count();
            let tasks = process.task_count();
            let nodes = resources.nodes.len();
            (
                Just((process, resources, total, capture, types, custom_states)),
                prop::collection::vec(raw_record(), 0..60),
                prop::collection::vec(label(), nodes),
                prop::collection::vec(label(), tasks),
                prop::collection::vec(label(), threads),
                prop::collection::btree_map(0u32..20, label(), 1..5),
            )
        })
        .prop_map(|(fixed, raw, node_names, task_names, thread_names, states)| {
            let (process, resources, total, capture, types, custom_states) = fixed;
            let keys: Vec<_> = process.threads().collect();
            let cpus = resources.total_cpus();
            let mut b = TraceBundle::new(Header {
                capture,
                total_time: total,
                resources,
                process,
            });
            for (code, desc, values) in &types {
                let values: Vec<(u64, &str)> = values.iter().map(|(v, l)| (*v, l.as_str())).collect();
                b.registry.register(*code, desc, &values).unwrap();
            }
            b.states = if custom_states { states } else { default_state_table() };
            let state_codes: Vec<u32> = b.states.keys().copied().collect();
            b.rows = RowLabels {
                node: node_names,
                task: task_names,
                thread: thread_names,
            };
            for (kind, l1, l2, cpu, times, st, pairs, size, tag) in raw {
                let at = |i: &Index| {
                    let k = keys[i.index(keys.len())];
                    Location::new(cpu % (cpus + 1), k.appl, k.task, k.thread)
                };
                let mut t = times.map(|x| x % (total + 1));
                t.sort_unstable();
                let kind = if kind == 1 && types.is_empty() { 0 } else { kind };
                let record: TraceRecord = match kind {
                    0 => StateRecord {
                        location: at(&l1),
                        begin: t[0],
                        end: t[2],
                        state: state_codes[st.index(state_codes.len())],
                    }
                    .into(),
                    1 => EventRecord {
                        location: at(&l1),
                        time: t[1],
                        pairs: pairs
                            .iter()
                            .map(|(i, v)| (types[i.index(types.len())].0, *v))
                            .collect(),
                    }
                    .into(),
                    _ => CommRecord {
                        send: at(&l1),
                        recv: at(&l2),
                        logical_send: t[0],
                        physical_send: t[1],
                        logical_recv: t[2],
                        physical_recv: t[3],
                        size,
                        tag,
                    }
                    .into(),
                };
                b.records.push(record);
            }
            b.canonicalized()
        })
}

/// Serializes the three files in memory.
pub fn write_all(b: &TraceBundle) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let (mut prv, mut pcf, mut row) = (Vec::new(), Vec::new(), Vec::new());
    write_prv(b, &mut prv).unwrap();
    write_pcf(b, &mut pcf).unwrap();
    write_row(b, &mut row).unwrap();
    (prv, pcf, row)
}

/// Per thread, the nesting depth of user-function events never drops below
/// zero and returns to zero.
pub fn scopes_balanced(b: &TraceBundle, user_function_type: u32) -> bool {
    let mut depth: BTreeMap<_, i64> = BTreeMap::new();
    for e in b.records.iter().filter_map(TraceRecord::as_event) {
        for &(t, v) in &e.pairs {
            if t == user_function_type {
                let d = depth.entry(e.location.key()).or_insert(0);
                *d += if v == 0 { -1 } else { 1 };
                if *d < 0 {
                    return false;
                }
            }
        }
    }
    depth.values().all(|&d| d == 0)
}
