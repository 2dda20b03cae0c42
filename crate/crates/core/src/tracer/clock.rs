use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

/// Nanosecond time source. Must never go backwards.
pub trait Clock: Send + Sync {
    fn now_ns(&self) -> u64;
}

/// Wall time from [`Instant`], counted from construction.
#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    start: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        MonotonicClock {
            start: Instant::now(),
        }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_ns(&self) -> u64 {
        self.start.elapsed().as_nanos() as u64
    }
}

/// Manually driven clock for tests and trace synthesis. Clones share the
/// same time.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock(Arc<AtomicU64>);

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Moves the clock to `t`. Moving backwards is ignored.
    pub fn set(&self, t: u64) {
        self.0.fetch_max(t, Ordering::AcqRel);
    }

    pub fn advance(&self, dt: u64) -> u64 {
        self.0.fetch_add(dt, Ordering::AcqRel) + dt
    }
}

impl Clock for VirtualClock {
    fn now_ns(&self) -> u64 {
        self.0.load(Ordering::Acquire)
    }
}
