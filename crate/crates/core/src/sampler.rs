//! Statistical sampling on top of a [`Tracer`].
//!
//! In time mode a sample is taken every `period · U` nanoseconds, with `U`
//! drawn uniformly from `[1 − jitter, 1 + jitter]` so the sampler cannot lock
//! onto periodic program behaviour. In counter mode a sample is taken each
//! time an accumulating counter (fed through [`Sampler::counter_tick`])
//! crosses a multiple of the threshold.
//!
//! A sample is one event record carrying the callstack (innermost frame, or
//! one pair per frame with `full_stack`) and, when available, a counter
//! snapshot.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::model::Location;
use crate::record::{EventType, EventValue};
use crate::tracer::{Tracer, TracerError};

pub const DEFAULT_CALLSTACK_EVENT_TYPE: EventType = 30000000;
pub const DEFAULT_COUNTER_EVENT_TYPE: EventType = 42000050;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SamplerError {
    #[error("sampler already stopped")]
    Stopped,
    #[error("operation requires {0} mode")]
    Mode(&'static str),
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tracer(#[from] TracerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    #[default]
    Time,
    Counter,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub mode: SamplingMode,
    pub period_ns: u64,
    /// In `[0, 1)`.
    pub jitter_fraction: f64,
    pub counter_threshold: u64,
    pub callstack_event_type: EventType,
    pub counter_event_type: EventType,
    pub rng_seed: u64,
    /// One (callstack type + depth, frame) pair per frame instead of only the
    /// innermost frame.
    pub full_stack: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            mode: SamplingMode::Time,
            period_ns: 1_000_000,
            jitter_fraction: 0.0,
            counter_threshold: 1000,
            callstack_event_type: DEFAULT_CALLSTACK_EVENT_TYPE,
            counter_event_type: DEFAULT_COUNTER_EVENT_TYPE,
            rng_seed: 0,
            full_stack: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        match self.mode {
            SamplingMode::Time if self.period_ns == 0 => {
                Err(SamplerError::Config("period_ns must be positive".into()))
            }
            SamplingMode::Counter if self.counter_threshold == 0 => {
                Err(SamplerError::Config("counter_threshold must be positive".into()))
            }
            _ if !(0.0..1.0).contains(&self.jitter_fraction) => Err(SamplerError::Config(
                format!("jitter_fraction {} not in [0, 1)", self.jitter_fraction),
            )),
            _ if self.callstack_event_type == 0 || self.counter_event_type == 0 => {
                Err(SamplerError::Config("event types must be nonzero".into()))
            }
            _ => Ok(()),
        }
    }
}

type FramesFn = Box<dyn Fn() -> Vec<EventValue> + Send + Sync>;
type CounterFn = Box<dyn Fn() -> u64 + Send + Sync>;

/// Where samples get their content from.
pub struct SampleSources {
    /// Frame identifiers, innermost first. May be empty.
    pub callstack: FramesFn,
    /// Counter snapshot attached to time-mode samples.
    pub counter: Option<CounterFn>,
}

impl SampleSources {
    pub fn callstack(f: impl Fn() -> Vec<EventValue> + Send + Sync + 'static) -> Self {
        SampleSources {
            callstack: Box::new(f),
            counter: None,
        }
    }

    pub fn with_counter(mut self, f: impl Fn() -> u64 + Send + Sync + 'static) -> Self {
        self.counter = Some(Box::new(f));
        self
    }
}

/// Draws i.i.d. sampling intervals, uniform on `[p(1−j), p(1+j)]`.
#[derive(Debug, Clone)]
pub struct JitterSchedule {
    rng: ChaCha8Rng,
    period: u64,
    jitter: f64,
}

impl JitterSchedule {
    pub fn new(period: u64, jitter: f64, seed: u64) -> Self {
        JitterSchedule {
            rng: ChaCha8Rng::seed_from_u64(seed),
            period,
            jitter,
        }
    }

    pub fn next_interval(&mut self) -> u64 {
        if self.jitter == 0.0 {
            return self.period;
        }
        let p = self.period as f64;
        let x: f64 = self.rng.gen_range(p * (1.0 - self.jitter)..=p * (1.0 + self.jitter));
        (x.round() as u64).max(1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SamplerReport {
    pub samples: u64,
    /// Time-mode intervals preceding each sample, in order.
    pub intervals: Vec<u64>,
}

struct Schedule {
    jitter: JitterSchedule,
    next_due: u64,
    pending_interval: u64,
    intervals: Vec<u64>,
}

struct Core {
    tracer: Tracer,
    config: SamplerConfig,
    location: Location,
    sources: SampleSources,
    schedule: Mutex<Schedule>,
    counter: AtomicU64,
    samples: AtomicU64,
}

impl Core {
    fn pairs(&self, counter: Option<u64>) -> Vec<(EventType, EventValue)> {
        let frames = (self.sources.callstack)();
        let cs = self.config.callstack_event_type;
        let mut pairs: Vec<(EventType, EventValue)> = if self.config.full_stack && !frames.is_empty() {
            frames
                .iter()
                .enumerate()
                .map(|(depth, &f)| (cs + depth as u32, f))
                .collect()
        } else {
            vec![(cs, frames.first().copied().unwrap_or(0))]
        };
        let snapshot = counter.or_else(|| self.sources.counter.as_ref().map(|f| f()));
        if let Some(c) = snapshot {
            pairs.push((self.config.counter_event_type, c));
        }
        pairs
    }

    /// Takes every time-mode sample due at or before `until`. With
    /// `at_due == false` samples are stamped with the tracer clock instead.
    fn run_until(&self, until: u64, at_due: bool) -> Result<u64, SamplerError> {
        let mut s = self.schedule.lock().unwrap();
        let mut taken = 0;
        while s.next_due <= until {
            let pairs = self.pairs(None);
            let at = at_due.then_some(s.next_due);
            self.tracer.emit_on(self.location, at, pairs)?;
            let interval = s.pending_interval;
            s.intervals.push(interval);
            s.pending_interval = s.jitter.next_interval();
            s.next_due += s.pending_interval;
            self.samples.fetch_add(1, Ordering::AcqRel);
            taken += 1;
        }
        Ok(taken)
    }
}

/// A running sampler. Stop it with [`Sampler::stop`] before finishing the
/// tracer.
pub struct Sampler {
    core: Arc<Core>,
    timer: Option<(JoinHandle<()>, Arc<AtomicBool>)>,
    stopped: bool,
}

/// Attaches a sampler to `tracer`, sampling the calling thread's location.
///
/// In time mode nothing happens until the sampler is driven, either by
/// [`Sampler::advance_to`] (virtual time) or by [`Sampler::spawn_timer`].
pub fn start_sampler(
    tracer: &Tracer,
    config: SamplerConfig,
    sources: SampleSources,
) -> Result<Sampler, SamplerError> {
    config.validate()?;
    let location = tracer.resolve_location()?;
    tracer.acquire_sampler()?;
    let mut jitter = JitterSchedule::new(config.period_ns, config.jitter_fraction, config.rng_seed);
    let first = jitter.next_interval();
    let now = tracer.now();
    Ok(Sampler {
        core: Arc::new(Core {
            tracer: tracer.clone(),
            config,
            location,
            sources,
            schedule: Mutex::new(Schedule {
                jitter,
                next_due: now + first,
                pending_interval: first,
                intervals: Vec::new(),
            }),
            counter: AtomicU64::new(0),
            samples: AtomicU64::new(0),
        }),
        timer: None,
        stopped: false,
    })
}

impl Sampler {
    pub fn config(&self) -> &SamplerConfig {
        &self.core.config
    }

    pub fn location(&self) -> Location {
        self.core.location
    }

    pub fn samples(&self) -> u64 {
        self.core.samples.load(Ordering::Acquire)
    }

    fn require(&self, mode: SamplingMode) -> Result<(), SamplerError> {
        if self.stopped {
            return Err(SamplerError::Stopped);
        }
        if self.core.config.mode != mode {
            return Err(SamplerError::Mode(match mode {
                SamplingMode::Time => "time",
                SamplingMode::Counter => "counter",
            }));
        }
        Ok(())
    }

    /// Takes all samples scheduled at or before tracer time `t`, stamped at
    /// their scheduled times. Returns how many were taken.
    pub fn advance_to(&self, t: u64) -> Result<u64, SamplerError> {
        self.require(SamplingMode::Time)?;
        self.core.run_until(t, true)
    }

    /// Drives the schedule from a background thread using the tracer clock.
    pub fn spawn_timer(&mut self) -> Result<(), SamplerError> {
        self.require(SamplingMode::Time)?;
        if self.timer.is_some() {
            return Ok(());
        }
        let stop = Arc::new(AtomicBool::new(false));
        let core = self.core.clone();
        let flag = stop.clone();
        let handle = std::thread::spawn(move || {
            while !flag.load(Ordering::Acquire) {
                let now = core.tracer.now();
                let due = core.schedule.lock().unwrap().next_due;
                if now >= due {
                    if let Err(e) = core.run_until(now, false) {
                        log::warn!("sampler: {e}");
                        return;
                    }
                } else {
                    std::thread::sleep(Duration::from_nanos((due - now).min(1_000_000)));
                }
            }
        });
        self.timer = Some((handle, stop));
        Ok(())
    }

    /// Adds `increment` to the counter; one sample per threshold crossing,
    /// each carrying the accumulated total. Returns the number of samples.
    pub fn counter_tick(&self, increment: u64) -> Result<u64, SamplerError> {
        self.require(SamplingMode::Counter)?;
        let th = self.core.config.counter_threshold;
        let old = self.core.counter.fetch_add(increment, Ordering::AcqRel);
        let total = old + increment;
        let crossings = total / th - old / th;
        for _ in 0..crossings {
            let pairs = self.core.pairs(Some(total));
            self.core.tracer.emit_pairs(&pairs)?;
            self.core.samples.fetch_add(1, Ordering::AcqRel);
        }
        Ok(crossings)
    }

    pub fn counter_total(&self) -> u64 {
        self.core.counter.load(Ordering::Acquire)
    }

    /// Stops sampling, waiting for an in-flight sample to land.
    pub fn stop(&mut self) -> Result<SamplerReport, SamplerError> {
        if self.stopped {
            return Err(SamplerError::Stopped);
        }
        self.stopped = true;
        if let Some((handle, stop)) = self.timer.take() {
            stop.store(true, Ordering::Release);
            let _ = handle.join();
        }
        self.core.tracer.release_sampler();
        Ok(SamplerReport {
            samples: self.samples(),
            intervals: self.core.schedule.lock().unwrap().intervals.clone(),
        })
    }
}

impl Drop for Sampler {
    fn drop(&mut self) {
        if !self.stopped {
            let _ = self.stop();
        }
    }
}
