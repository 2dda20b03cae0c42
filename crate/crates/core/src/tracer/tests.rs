use super::*;
use crate::prv::{validate_bundle, CommSide};
use crate::record::{STATE_IDLE, STATE_RUNNING};

const UF: EventType = crate::config::DEFAULT_USER_FUNCTION_TYPE;

fn tracer_with(process: ProcessModel, provider: IdentityProvider) -> (Tracer, VirtualClock) {
    let clock = VirtualClock::new();
    let cpus = process.task_count() as u32;
    let t = Tracer::new(
        process,
        ResourceModel::single_node(cpus.max(1)),
        provider,
        TracerConfig::default(),
        clock.clone(),
    )
    .unwrap();
    (t, clock)
}

fn singleton() -> (Tracer, VirtualClock) {
    tracer_with(ProcessModel::single_node(1, 1), IdentityProvider::default())
}

fn states(b: &TraceBundle) -> Vec<(u64, u64, StateCode)> {
    b.records
        .iter()
        .filter_map(TraceRecord::as_state)
        .map(|s| (s.begin, s.end, s.state))
        .collect()
}

fn events(b: &TraceBundle) -> Vec<(u64, EventType, EventValue)> {
    b.records
        .iter()
        .filter_map(TraceRecord::as_event)
        .flat_map(|e| e.pairs.iter().map(move |&(t, v)| (e.time, t, v)))
        .collect()
}

#[test]
fn init_finish_without_emissions() {
    let (t, clock) = singleton();
    t.init().unwrap();
    assert!(t.is_active());
    clock.set(30);
    let b = t.finish().unwrap();
    assert_eq!(states(&b), vec![(0, 30, STATE_RUNNING)]);
    assert_eq!(b.records.len(), 1);
    assert!(validate_bundle(&b).is_empty());
}

#[test]
fn lifecycle_errors() {
    let (t, _) = singleton();
    assert!(matches!(t.emit(1, 1), Err(TracerError::Lifecycle { .. })));
    assert!(matches!(t.finish(), Err(TracerError::Lifecycle { .. })));
    t.init().unwrap();
    assert!(matches!(t.init(), Err(TracerError::Lifecycle { .. })));
    t.finish().unwrap();
    assert!(matches!(t.finish(), Err(TracerError::Lifecycle { .. })));
    assert!(matches!(t.emit(1, 1), Err(TracerError::Lifecycle { .. })));
    assert!(matches!(t.register(1, "x", &[]), Err(TracerError::Lifecycle { .. })));
}

#[test]
fn init_epoch_is_clock_time_at_init() {
    let (t, clock) = singleton();
    clock.set(1_000);
    t.init().unwrap();
    clock.set(1_250);
    t.emit(5, 5).unwrap();
    let b = t.finish().unwrap();
    assert_eq!(events(&b), vec![(250, 5, 5)]);
}

#[test]
fn distributed_provider_sets_task() {
    let (t, clock) = tracer_with(ProcessModel::single_node(4, 1), IdentityProvider::distributed(3, 4));
    t.init().unwrap();
    clock.set(5);
    t.emit(9, 1).unwrap();
    let b = t.finish().unwrap();
    assert!(b.records.iter().all(|r| r.location().task == 3));
}

#[test]
fn remap_after_init_is_a_lifecycle_error() {
    let provider = IdentityProvider::default();
    let (t, _) = tracer_with(ProcessModel::single_node(1, 4), provider.clone());
    let early = provider.clone().set_threadid_function(|| 1);
    assert!(early.is_ok());
    t.init().unwrap();
    assert_eq!(
        provider.set_threadid_function(|| 1).unwrap_err(),
        ModelError::Lifecycle
    );
}

#[test]
fn constant_thread_id_puts_everything_on_thread_one() {
    let provider = IdentityProvider::default()
        .set_threadid_function(|| 1)
        .unwrap();
    let (t, clock) = tracer_with(ProcessModel::single_node(1, 4), provider);
    t.init().unwrap();
    std::thread::scope(|s| {
        for i in 0..4 {
            let t = &t;
            s.spawn(move || t.emit(10, i + 1).unwrap());
        }
    });
    clock.set(100);
    let b = t.finish().unwrap();
    let text = {
        let mut v = Vec::new();
        crate::prv::write_prv(&b, &mut v).unwrap();
        String::from_utf8(v).unwrap()
    };
    // every record line has thread field (5th) equal to 1
    for line in text.lines().skip(1) {
        assert_eq!(line.split(':').nth(4), Some("1"), "{line}");
    }
    assert_eq!(events(&b).len(), 4);
}

#[test]
fn register_and_emit() {
    let (t, clock) = singleton();
    t.init().unwrap();
    t.register(84210, "Vector length", &[]).unwrap();
    t.register(84210, "Vector length", &[]).unwrap();
    assert!(matches!(
        t.register(84210, "Other name", &[]),
        Err(TracerError::Registry(RegistryError::Conflict { .. }))
    ));
    clock.set(3);
    t.emit(84210, 1024).unwrap();
    let b = t.finish().unwrap();
    let e = b.records.iter().find_map(TraceRecord::as_event).unwrap();
    assert_eq!(e.pairs, vec![(84210, 1024)]);
    assert_eq!(b.registry.description(84210), Some("Vector length"));
}

#[test]
fn task_id_event_pattern_without_registration() {
    const TASKID_EVENT: EventType = 1000;
    let (t, clock) = singleton();
    t.init().unwrap();
    clock.set(1);
    t.emit(TASKID_EVENT, 0xdead_beef).unwrap();
    clock.set(2);
    t.emit(TASKID_EVENT, 0).unwrap();
    let b = t.finish().unwrap();
    let e = events(&b);
    assert_eq!(e, vec![(1, TASKID_EVENT, 0xdead_beef), (2, TASKID_EVENT, 0)]);
    assert!(!b.registry.contains(TASKID_EVENT));
}

#[test]
fn invalid_events() {
    let (t, _) = singleton();
    t.init().unwrap();
    assert_eq!(t.emit(0, 1), Err(TracerError::InvalidEvent));
    assert_eq!(t.emit_pairs(&[]), Err(TracerError::InvalidEvent));
}

#[test]
fn events_from_one_thread_keep_their_order() {
    let (t, clock) = singleton();
    t.init().unwrap();
    for (time, v) in [(5, 1), (5, 2), (9, 3)] {
        clock.set(time);
        t.emit(77, v).unwrap();
    }
    let b = t.finish().unwrap();
    assert_eq!(events(&b), vec![(5, 77, 1), (5, 77, 2), (9, 77, 3)]);
}

#[test]
fn interleaved_threads_merge_time_sorted() {
    // real clock: both threads emit concurrently
    let real = Tracer::new(
        ProcessModel::single_node(1, 2),
        ResourceModel::single_node(2),
        IdentityProvider::default(),
        TracerConfig::default(),
        MonotonicClock::new(),
    )
    .unwrap();
    real.init().unwrap();
    std::thread::scope(|s| {
        let r = &real;
        s.spawn(move || {
            for i in 0..200 {
                r.emit(1, i).unwrap();
            }
        });
        for i in 0..200 {
            real.emit(2, i).unwrap();
        }
    });
    let b = real.finish().unwrap();
    let mut oracle: Vec<TraceRecord> = b.records.clone();
    oracle.sort_by_key(|r| (r.time(), r.kind(), r.location().key()));
    assert_eq!(b.records, oracle);
    assert_eq!(events(&b).len(), 400);
    assert!(validate_bundle(&b).is_empty());
}

#[test]
fn user_function_scope() {
    let (t, clock) = singleton();
    t.init().unwrap();
    clock.set(10);
    let tok = t.user_function_enter(1).unwrap();
    clock.set(50);
    t.user_function_exit(tok).unwrap();
    clock.set(60);
    let b = t.finish().unwrap();
    assert_eq!(events(&b), vec![(10, UF, 1), (50, UF, 0)]);
    assert_eq!(
        states(&b),
        vec![(0, 10, STATE_RUNNING), (10, 50, STATE_RUNNING), (50, 60, STATE_RUNNING)]
    );
}

#[test]
fn nested_user_functions_close_lifo() {
    let (t, clock) = singleton();
    t.init().unwrap();
    clock.set(1);
    let a = t.user_function_enter(1).unwrap();
    clock.set(2);
    let b = t.user_function_enter(2).unwrap();
    clock.set(3);
    // exiting the outer scope first is a mismatch
    let err = t.user_function_exit(a).unwrap_err();
    assert_eq!(err, TracerError::ScopeMismatch);
    t.user_function_exit(b).unwrap();
    clock.set(4);
    let bundle = t.finish().unwrap();
    // the outer scope (its token consumed by the failed exit) is closed by finish
    let values: Vec<u64> = events(&bundle).iter().map(|e| e.2).collect();
    assert_eq!(values, vec![1, 2, 0, 0]);
}

#[test]
fn stale_token_is_rejected() {
    let (t, clock) = singleton();
    t.init().unwrap();
    let tok = t.user_function_enter(1).unwrap();
    let stale = ScopeToken {
        key: tok.key,
        id: tok.id,
    };
    clock.set(1);
    t.user_function_exit(tok).unwrap();
    assert_eq!(t.user_function_exit(stale), Err(TracerError::ScopeMismatch));
    assert_eq!(t.user_function_enter(0).unwrap_err(), TracerError::InvalidFunctionId);
}

#[test]
fn user_function_restores_previous_state() {
    let (t, clock) = singleton();
    t.init().unwrap();
    clock.set(5);
    t.set_state(7).unwrap();
    clock.set(10);
    {
        let _g = t.user_function(3);
        clock.set(20);
    }
    clock.set(30);
    let b = t.finish().unwrap();
    assert_eq!(
        states(&b),
        vec![(0, 5, 1), (5, 10, 7), (10, 20, 1), (20, 30, 7)]
    );
}

#[test]
fn macro_scope() {
    let (t, clock) = singleton();
    t.init().unwrap();
    let r = crate::user_function!(t, 9, {
        clock.set(4);
        21 * 2
    });
    assert_eq!(r, 42);
    let b = t.finish().unwrap();
    assert_eq!(events(&b), vec![(0, UF, 9), (4, UF, 0)]);
}

#[test]
fn set_state_segments() {
    let (t, clock) = singleton();
    t.init().unwrap();
    clock.set(100);
    t.set_state(STATE_IDLE).unwrap();
    clock.set(150);
    t.set_state(STATE_IDLE).unwrap();
    clock.set(200);
    assert_eq!(t.set_state(99), Err(TracerError::UnknownState(99)));
    let b = t.finish().unwrap();
    assert_eq!(
        states(&b),
        vec![(0, 100, STATE_RUNNING), (100, 150, STATE_IDLE), (150, 200, STATE_IDLE)]
    );
}

fn two_task_tracer() -> (Tracer, VirtualClock, Arc<AtomicU64>) {
    let current = Arc::new(AtomicU64::new(1));
    let c = current.clone();
    let provider = IdentityProvider::default()
        .set_taskid_function(move || c.load(Ordering::Relaxed) as u32)
        .unwrap()
        .set_numtasks_function(|| 2)
        .unwrap()
        .set_threadid_function(|| 1)
        .unwrap();
    let (t, clock) = tracer_with(ProcessModel::single_node(2, 1), provider);
    (t, clock, current)
}

#[test]
fn matched_communication() {
    let (t, clock, current) = two_task_tracer();
    let task = |n: u32| Location::new(0, 1, n, 1);
    t.init().unwrap();
    clock.set(100);
    t.emit_comm(CommDirection::Send, task(2), 7, 1024, CommTimes::default())
        .unwrap();
    current.store(2, Ordering::Relaxed);
    clock.set(200);
    t.emit_comm(CommDirection::Recv, task(1), 7, 1024, CommTimes::default())
        .unwrap();
    clock.set(300);
    let b = t.finish().unwrap();
    let c = b.records.iter().find_map(TraceRecord::as_comm).unwrap();
    assert_eq!(
        (c.size, c.tag, c.physical_send, c.physical_recv),
        (1024, 7, 100, 200)
    );
    assert_eq!((c.send.task, c.recv.task), (1, 2));
    assert!(validate_bundle(&b).is_empty());
}

#[test]
fn unmatched_receive_is_reported() {
    let (t, clock, current) = two_task_tracer();
    t.init().unwrap();
    current.store(2, Ordering::Relaxed);
    clock.set(50);
    t.emit_comm(
        CommDirection::Recv,
        Location::new(0, 1, 1, 1),
        3,
        8,
        CommTimes::default(),
    )
    .unwrap();
    let b = t.finish().unwrap();
    assert_eq!(b.unmatched.len(), 1);
    assert_eq!(b.unmatched[0].side, CommSide::Recv);
    let report = validate_bundle(&b);
    assert_eq!(report.count(crate::prv::ViolationKind::UnmatchedComm), 1);
}

#[test]
fn receive_before_send_is_a_causality_error() {
    let (t, clock, current) = two_task_tracer();
    t.init().unwrap();
    clock.set(100);
    t.emit_comm(CommDirection::Send, Location::new(0, 1, 2, 1), 0, 1, CommTimes::default())
        .unwrap();
    current.store(2, Ordering::Relaxed);
    clock.set(150);
    let r = t.emit_comm(
        CommDirection::Recv,
        Location::new(0, 1, 1, 1),
        0,
        1,
        CommTimes::at(90),
    );
    assert_eq!(r, Err(TracerError::Causality { send: 100, recv: 90 }));
}

#[test]
fn peer_must_exist() {
    let (t, _, _) = two_task_tracer();
    t.init().unwrap();
    assert!(t
        .emit_comm(CommDirection::Send, Location::new(0, 1, 3, 1), 0, 1, CommTimes::default())
        .is_err());
}

#[test]
fn time_regression_on_explicit_times() {
    let (t, clock) = singleton();
    t.init().unwrap();
    clock.set(10);
    t.emit(1, 1).unwrap();
    let loc = t.resolve_location().unwrap();
    assert!(matches!(
        t.emit_on(loc, Some(5), vec![(1, 2)]),
        Err(TracerError::TimeRegression { .. })
    ));
}
