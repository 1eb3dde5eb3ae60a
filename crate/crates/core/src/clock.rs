//! Monotonic time sources. Phases are driven by an injected clock so that
//! tests can run the protocol on virtual time.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    /// Milliseconds since the clock's origin.
    fn now_ms(&self) -> u64;

    /// Blocks (or advances virtual time) until `deadline_ms`.
    fn sleep_until(&self, deadline_ms: u64);

    /// A clock for work that runs concurrently with the caller. Virtual
    /// clocks return an independent copy starting at the current time, so
    /// background jobs measure their own simulated latency.
    fn fork(&self) -> Arc<dyn Clock>;

    /// True when sleeping does not block the thread.
    fn is_virtual(&self) -> bool {
        false
    }

    fn sleep_ms(&self, ms: u64) {
        self.sleep_until(self.now_ms().saturating_add(ms));
    }
}

#[derive(Debug, Clone)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_ms(&self) -> u64 {
        self.origin.elapsed().as_millis() as u64
    }

    fn sleep_until(&self, deadline_ms: u64) {
        let now = self.now_ms();
        if deadline_ms > now {
            std::thread::sleep(Duration::from_millis(deadline_ms - now));
        }
    }

    fn fork(&self) -> Arc<dyn Clock> {
        Arc::new(self.clone())
    }
}

/// Virtual time that only moves when someone sleeps on it.
#[derive(Debug, Default)]
pub struct VirtualClock {
    now: AtomicU64,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::starting_at(0)
    }

    pub fn starting_at(ms: u64) -> Self {
        Self { now: AtomicU64::new(ms) }
    }

    pub fn advance(&self, ms: u64) {
        self.now.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }

    fn sleep_until(&self, deadline_ms: u64) {
        self.now.fetch_max(deadline_ms, Ordering::SeqCst);
    }

    fn fork(&self) -> Arc<dyn Clock> {
        Arc::new(VirtualClock::starting_at(self.now_ms()))
    }

    fn is_virtual(&self) -> bool {
        true
    }
}
