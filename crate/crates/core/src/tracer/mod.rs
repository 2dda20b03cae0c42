//! In-process trace recorder.
//!
//! A [`Tracer`] goes through `Uninitialized → Active → Finished`. While
//! active, any number of threads may record states, events and
//! communications; each record lands in the buffer of the location the
//! [`IdentityProvider`] resolves for the caller. [`Tracer::finish`] closes
//! open states, merges all buffers and returns a [`TraceBundle`].
//!
//! ```
//! use prvkit_core::tracer::{Tracer, VirtualClock};
//! use prvkit_core::{IdentityProvider, ProcessModel, ResourceModel};
//!
//! let clock = VirtualClock::new();
//! let tracer = Tracer::new(
//!     ProcessModel::single_node(1, 1),
//!     ResourceModel::single_node(1),
//!     IdentityProvider::default(),
//!     Default::default(),
//!     clock.clone(),
//! )
//! .unwrap();
//! tracer.init().unwrap();
//! tracer.register(84210, "Vector length", &[]).unwrap();
//! clock.set(10);
//! tracer.emit(84210, 1024).unwrap();
//! clock.set(20);
//! let bundle = tracer.finish().unwrap();
//! assert_eq!(bundle.total_time(), 20);
//! ```

mod clock;
mod comm;

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicU8, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use thiserror::Error;

pub use clock::{Clock, MonotonicClock, VirtualClock};

use crate::config::TracerConfig;
use crate::model::{IdentityProvider, Location, ModelError, ProcessModel, ResourceModel, ThreadKey};
use crate::prv::{CaptureTime, Header, RowLabels, TraceBundle};
use crate::record::{
    sort_canonical, EventRecord, EventType, EventValue, StateCode, StateRecord, TraceRecord,
    STATE_RUNNING,
};
use crate::registry::{EventRegistry, RegistryError};

use comm::{CausalityViolation, Half, Matcher};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TracerError {
    #[error("tracer is {actual}, operation requires it to be {expected}")]
    Lifecycle {
        expected: &'static str,
        actual: &'static str,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("state code {0} is not in the state table")]
    UnknownState(StateCode),
    #[error("event without type:value pairs or with type 0")]
    InvalidEvent,
    #[error("user function id 0 is reserved for exits")]
    InvalidFunctionId,
    #[error("scope token does not match the innermost open user function of this thread")]
    ScopeMismatch,
    #[error("message received at {recv} before it was sent at {send}")]
    Causality { send: u64, recv: u64 },
    #[error("time went backwards on {location}: {now} < {last}")]
    TimeRegression { location: ThreadKey, last: u64, now: u64 },
    #[error("a sampler is already attached to this tracer")]
    SamplerActive,
}

const UNINITIALIZED: u8 = 0;
const ACTIVE: u8 = 1;
const FINISHED: u8 = 2;

fn lifecycle_name(s: u8) -> &'static str {
    match s {
        UNINITIALIZED => "uninitialized",
        ACTIVE => "active",
        _ => "finished",
    }
}

/// Direction of a communication mark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommDirection {
    Send,
    /// The receiving side completed the message.
    Recv,
}

/// Timestamps for one side of a message. Physical defaults to now, logical
/// defaults to physical.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommTimes {
    pub logical: Option<u64>,
    pub physical: Option<u64>,
}

impl CommTimes {
    pub fn at(physical: u64) -> Self {
        CommTimes {
            logical: None,
            physical: Some(physical),
        }
    }
}

/// Proof of an open user-function scope.
#[derive(Debug, PartialEq, Eq)]
pub struct ScopeToken {
    key: ThreadKey,
    id: u64,
}

#[derive(Debug, Clone, Copy)]
struct OpenState {
    code: StateCode,
    begin: u64,
    location: Location,
}

#[derive(Debug)]
struct ThreadBuffer {
    records: Vec<TraceRecord>,
    open: Option<OpenState>,
    /// (scope id, state to restore on exit)
    scopes: Vec<(u64, StateCode)>,
    last: u64,
    location: Location,
}

impl ThreadBuffer {
    fn switch_state(&mut self, code: StateCode, t: u64, loc: Location) {
        if let Some(open) = self.open.take() {
            self.records.push(TraceRecord::State(StateRecord {
                location: open.location,
                begin: open.begin,
                end: t,
                state: open.code,
            }));
        }
        self.open = Some(OpenState {
            code,
            begin: t,
            location: loc,
        });
    }

    fn event(&mut self, loc: Location, t: u64, pairs: Vec<(EventType, EventValue)>) {
        self.records.push(TraceRecord::Event(EventRecord {
            location: loc,
            time: t,
            pairs,
        }));
    }
}

struct Shared {
    lifecycle: AtomicU8,
    process: ProcessModel,
    resources: ResourceModel,
    provider: IdentityProvider,
    clock: Box<dyn Clock>,
    epoch: AtomicU64,
    config: TracerConfig,
    registry: RwLock<EventRegistry>,
    threads: RwLock<HashMap<ThreadKey, Arc<Mutex<ThreadBuffer>>>>,
    comms: Mutex<Matcher>,
    sampler: AtomicBool,
    next_scope: AtomicU64,
}

/// Handle to a trace recorder. Cloning is cheap; all clones share state.
#[derive(Clone)]
pub struct Tracer {
    shared: Arc<Shared>,
}

impl std::fmt::Debug for Tracer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tracer")
            .field("lifecycle", &lifecycle_name(self.shared.lifecycle.load(Ordering::Acquire)))
            .finish_non_exhaustive()
    }
}

impl Tracer {
    pub fn new(
        process: ProcessModel,
        resources: ResourceModel,
        provider: IdentityProvider,
        config: TracerConfig,
        clock: impl Clock + 'static,
    ) -> Result<Self, TracerError> {
        resources.validate()?;
        process.validate(&resources)?;
        Ok(Tracer {
            shared: Arc::new(Shared {
                lifecycle: AtomicU8::new(UNINITIALIZED),
                process,
                resources,
                provider,
                clock: Box::new(clock),
                epoch: AtomicU64::new(0),
                config,
                registry: RwLock::default(),
                threads: RwLock::default(),
                comms: Mutex::default(),
                sampler: AtomicBool::new(false),
                next_scope: AtomicU64::new(1),
            }),
        })
    }

    pub fn config(&self) -> &TracerConfig {
        &self.shared.config
    }

    pub fn process(&self) -> &ProcessModel {
        &self.shared.process
    }

    pub fn is_active(&self) -> bool {
        self.shared.lifecycle.load(Ordering::Acquire) == ACTIVE
    }

    /// Nanoseconds since init.
    pub fn now(&self) -> u64 {
        self.shared
            .clock
            .now_ns()
            .saturating_sub(self.shared.epoch.load(Ordering::Acquire))
    }

    fn require(&self, expected: u8) -> Result<(), TracerError> {
        let actual = self.shared.lifecycle.load(Ordering::Acquire);
        if actual == expected {
            Ok(())
        } else {
            Err(TracerError::Lifecycle {
                expected: lifecycle_name(expected),
                actual: lifecycle_name(actual),
            })
        }
    }

    fn transition(&self, from: u8, to: u8) -> Result<(), TracerError> {
        self.shared
            .lifecycle
            .compare_exchange(from, to, Ordering::AcqRel, Ordering::Acquire)
            .map(|_| ())
            .map_err(|actual| TracerError::Lifecycle {
                expected: lifecycle_name(from),
                actual: lifecycle_name(actual),
            })
    }

    /// Where the calling thread records to.
    pub fn resolve_location(&self) -> Result<Location, TracerError> {
        let s = &self.shared;
        Ok(s.provider.resolve_location(&s.process, &s.resources)?)
    }

    /// Starts recording. Sets the clock epoch and opens a Running state for
    /// the calling thread.
    pub fn init(&self) -> Result<(), TracerError> {
        self.require(UNINITIALIZED)?;
        let loc = self.resolve_location()?;
        self.transition(UNINITIALIZED, ACTIVE)?;
        self.shared.provider.bind();
        self.shared
            .epoch
            .store(self.shared.clock.now_ns(), Ordering::Release);
        self.on_location(loc, None, |_, _, _| Ok(()))
    }

    fn buffer(&self, loc: Location) -> Arc<Mutex<ThreadBuffer>> {
        let key = loc.key();
        if let Some(b) = self.shared.threads.read().unwrap().get(&key) {
            return b.clone();
        }
        self.shared
            .threads
            .write()
            .unwrap()
            .entry(key)
            .or_insert_with(|| {
                Arc::new(Mutex::new(ThreadBuffer {
                    records: Vec::new(),
                    open: None,
                    scopes: Vec::new(),
                    last: 0,
                    location: loc,
                }))
            })
            .clone()
    }

    /// Runs `f` on the buffer of `loc` at time `at` (default: now). A buffer
    /// seen for the first time starts in the Running state.
    fn on_location<R>(
        &self,
        loc: Location,
        at: Option<u64>,
        f: impl FnOnce(&mut ThreadBuffer, Location, u64) -> Result<R, TracerError>,
    ) -> Result<R, TracerError> {
        let buf = self.buffer(loc);
        let mut b = buf.lock().unwrap();
        let t = at.unwrap_or_else(|| self.now());
        if t < b.last {
            return Err(TracerError::TimeRegression {
                location: loc.key(),
                last: b.last,
                now: t,
            });
        }
        b.last = t;
        b.location = loc;
        if b.open.is_none() {
            b.open = Some(OpenState {
                code: STATE_RUNNING,
                begin: t,
                location: loc,
            });
        }
        f(&mut b, loc, t)
    }

    fn on_thread<R>(
        &self,
        f: impl FnOnce(&mut ThreadBuffer, Location, u64) -> Result<R, TracerError>,
    ) -> Result<R, TracerError> {
        self.require(ACTIVE)?;
        let loc = self.resolve_location()?;
        self.on_location(loc, None, f)
    }

    /// Makes the calling thread known to the tracer, opening its Running
    /// state now.
    pub fn attach(&self) -> Result<Location, TracerError> {
        self.on_thread(|_, loc, _| Ok(loc))
    }

    /// Gives an event type (and optionally its values) a description.
    pub fn register(
        &self,
        code: EventType,
        description: &str,
        values: &[(EventValue, &str)],
    ) -> Result<(), TracerError> {
        self.require(ACTIVE)?;
        self.shared
            .registry
            .write()
            .unwrap()
            .register(code, description, values)?;
        Ok(())
    }

    pub fn emit(&self, code: EventType, value: EventValue) -> Result<(), TracerError> {
        self.emit_pairs(&[(code, value)])
    }

    /// Emits several pairs as one event record.
    pub fn emit_pairs(&self, pairs: &[(EventType, EventValue)]) -> Result<(), TracerError> {
        if pairs.is_empty() || pairs.iter().any(|&(t, _)| t == 0) {
            return Err(TracerError::InvalidEvent);
        }
        self.on_thread(|b, loc, t| {
            b.event(loc, t, pairs.to_vec());
            Ok(())
        })
    }

    /// Records an event on an explicit location, at `at` or now. Used by
    /// samplers running on their own timing context.
    pub(crate) fn emit_on(
        &self,
        loc: Location,
        at: Option<u64>,
        pairs: Vec<(EventType, EventValue)>,
    ) -> Result<(), TracerError> {
        self.require(ACTIVE)?;
        self.on_location(loc, at, |b, loc, t| {
            b.event(loc, t, pairs);
            Ok(())
        })
    }

    /// Closes the current state and opens `code`.
    pub fn set_state(&self, code: StateCode) -> Result<(), TracerError> {
        if !self.shared.config.states.contains_key(&code) {
            return Err(TracerError::UnknownState(code));
        }
        self.on_thread(|b, loc, t| {
            b.switch_state(code, t, loc);
            Ok(())
        })
    }

    /// Enters a user function: emits (user function type, `function_id`)
    /// and switches to Running until the matching exit.
    pub fn user_function_enter(&self, function_id: EventValue) -> Result<ScopeToken, TracerError> {
        if function_id == 0 {
            return Err(TracerError::InvalidFunctionId);
        }
        let ty = self.shared.config.user_function_type;
        let id = self.shared.next_scope.fetch_add(1, Ordering::Relaxed);
        self.on_thread(|b, loc, t| {
            b.event(loc, t, vec![(ty, function_id)]);
            let prev = b.open.map_or(STATE_RUNNING, |o| o.code);
            b.scopes.push((id, prev));
            b.switch_state(STATE_RUNNING, t, loc);
            Ok(ScopeToken { key: loc.key(), id })
        })
    }

    /// Leaves the innermost user function; `token` must come from the
    /// matching enter on this thread.
    pub fn user_function_exit(&self, token: ScopeToken) -> Result<(), TracerError> {
        let ty = self.shared.config.user_function_type;
        self.on_thread(|b, loc, t| {
            if loc.key() != token.key || b.scopes.last().map(|s| s.0) != Some(token.id) {
                return Err(TracerError::ScopeMismatch);
            }
            let (_, prev) = b.scopes.pop().unwrap();
            b.event(loc, t, vec![(ty, 0)]);
            b.switch_state(prev, t, loc);
            Ok(())
        })
    }

    /// RAII form of enter/exit. Failures are logged, not returned.
    pub fn user_function(&self, function_id: EventValue) -> UserFunctionScope<'_> {
        let token = self
            .user_function_enter(function_id)
            .map_err(|e| log::warn!("user function {function_id}: {e}"))
            .ok();
        UserFunctionScope {
            tracer: self,
            token,
        }
    }

    /// Records one side of a message exchanged with `peer`.
    ///
    /// Sends and receives are matched first-in first-out per
    /// (sender task, receiver task, tag); the pair becomes one communication
    /// record. Halves still unmatched at finish are kept in the bundle's
    /// `unmatched` list.
    pub fn emit_comm(
        &self,
        direction: CommDirection,
        peer: Location,
        tag: u64,
        size: u64,
        times: CommTimes,
    ) -> Result<(), TracerError> {
        let s = &self.shared;
        if !s.process.contains(peer.key()) {
            return Err(ModelError::IdentityRange {
                what: "peer task",
                id: peer.task,
                max: s.process.task_count() as u32,
            }
            .into());
        }
        self.on_thread(|_, loc, t| {
            let physical = times.physical.unwrap_or(t);
            let half = Half {
                location: loc,
                logical: times.logical.unwrap_or(physical),
                physical,
                size,
            };
            let mut m = s.comms.lock().unwrap();
            match direction {
                CommDirection::Send => m.send(half, &peer, tag),
                CommDirection::Recv => m.recv(half, &peer, tag),
            }
            .map_err(|CausalityViolation { send, recv }| TracerError::Causality { send, recv })
        })
    }

    pub(crate) fn acquire_sampler(&self) -> Result<(), TracerError> {
        self.require(ACTIVE)?;
        self.shared
            .sampler
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .map(|_| ())
            .map_err(|_| TracerError::SamplerActive)
    }

    pub(crate) fn release_sampler(&self) {
        self.shared.sampler.store(false, Ordering::Release);
    }

    /// Stops recording and returns the merged trace.
    ///
    /// No other tracer call may run concurrently. Open user functions are
    /// exited and open states closed at the final time.
    pub fn finish(&self) -> Result<TraceBundle, TracerError> {
        if self.shared.sampler.load(Ordering::Acquire) {
            return Err(TracerError::SamplerActive);
        }
        self.transition(ACTIVE, FINISHED)?;
        let s = &self.shared;
        let end = self.now();
        let uf = s.config.user_function_type;

        let mut records = Vec::new();
        let threads = s.threads.read().unwrap();
        let mut keys: Vec<&ThreadKey> = threads.keys().collect();
        keys.sort();
        for key in keys {
            let mut b = threads[key].lock().unwrap();
            let t = end.max(b.last);
            let loc = b.location;
            while let Some((_, prev)) = b.scopes.pop() {
                b.event(loc, t, vec![(uf, 0)]);
                b.switch_state(prev, t, loc);
            }
            if let Some(open) = b.open.take() {
                b.records.push(TraceRecord::State(StateRecord {
                    location: open.location,
                    begin: open.begin,
                    end: t,
                    state: open.code,
                }));
            }
            records.append(&mut b.records);
        }
        drop(threads);

        let comms = s.comms.lock().unwrap();
        records.extend(comms.completed.iter().copied().map(TraceRecord::Comm));
        let unmatched = comms.leftovers();
        drop(comms);

        sort_canonical(&mut records);
        let total_time = records.iter().map(TraceRecord::end_time).fold(end, u64::max);

        let mut bundle = TraceBundle::new(Header {
            capture: s.config.capture.unwrap_or_else(CaptureTime::now),
            total_time,
            resources: s.resources.clone(),
            process: s.process.clone(),
        });
        bundle.records = records;
        bundle.registry = s.registry.read().unwrap().clone();
        bundle.states = s.config.states.clone();
        bundle.rows = RowLabels::defaults(&s.process, &s.resources);
        bundle.unmatched = unmatched;
        Ok(bundle)
    }
}

/// Exits its user function when dropped.
#[must_use = "the user function is exited when this guard is dropped"]
pub struct UserFunctionScope<'a> {
    tracer: &'a Tracer,
    token: Option<ScopeToken>,
}

impl Drop for UserFunctionScope<'_> {
    fn drop(&mut self) {
        if let Some(token) = self.token.take() {
            if let Err(e) = self.tracer.user_function_exit(token) {
                log::warn!("user function exit: {e}");
            }
        }
    }
}

/// Wraps a block in a user-function scope.
///
/// ```
/// # use prvkit_core::tracer::{Tracer, VirtualClock};
/// # use prvkit_core::{IdentityProvider, ProcessModel, ResourceModel};
/// # let tracer = Tracer::new(ProcessModel::single_node(1, 1), ResourceModel::single_node(1),
/// #     IdentityProvider::default(), Default::default(), VirtualClock::new()).unwrap();
/// # tracer.init().unwrap();
/// fn axpy(tracer: &Tracer, a: f64, x: &[f64], y: &mut [f64]) {
///     prvkit_core::user_function!(tracer, 1, {
///         for (yi, xi) in y.iter_mut().zip(x) {
///             *yi = a.mul_add(*xi, *yi);
///         }
///     })
/// }
/// # let mut y = vec![1.0; 4];
/// # axpy(&tracer, 2.0, &[1.0; 4], &mut y);
/// # assert_eq!(y, vec![3.0; 4]);
/// ```
#[macro_export]
macro_rules! user_function {
    ($tracer:expr, $id:expr, $body:block) => {{
        let _scope = $tracer.user_function($id);
        $body
    }};
}

#[cfg(test)]
mod tests;
