//! Call-stack and time sources consumed by the logger.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

/// Supplies the current call stack, outermost frame first.
pub trait FrameProvider: Send + Sync {
    /// At most `max_depth` frames. Deeper stacks keep their outermost part.
    fn capture(&self, max_depth: usize) -> Vec<u64>;
}

/// Always returns the same frames.
#[derive(Debug, Clone)]
pub struct FixedFrames(pub Vec<u64>);

impl FrameProvider for FixedFrames {
    fn capture(&self, max_depth: usize) -> Vec<u64> {
        self.0.iter().copied().take(max_depth).collect()
    }
}

/// An explicit call stack maintained by the program itself. Used by the
/// synthetic corpus and tests, where native return addresses would make
/// traces depend on inlining decisions.
#[derive(Debug, Default, Clone)]
pub struct ShadowStack {
    frames: Arc<Mutex<Vec<u64>>>,
}

impl ShadowStack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, frame: u64) {
        self.frames
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(frame);
    }

    pub fn pop(&self) -> Option<u64> {
        self.frames.lock().unwrap_or_else(|e| e.into_inner()).pop()
    }

    pub fn set(&self, frames: &[u64]) {
        let mut cur = self.frames.lock().unwrap_or_else(|e| e.into_inner());
        cur.clear();
        cur.extend_from_slice(frames);
    }

    /// Pushes `frames` for the lifetime of the returned guard.
    pub fn scope(&self, frames: &[u64]) -> ShadowScope<'_> {
        for &f in frames {
            self.push(f);
        }
        ShadowScope {
            stack: self,
            depth: frames.len(),
        }
    }
}

impl FrameProvider for ShadowStack {
    fn capture(&self, max_depth: usize) -> Vec<u64> {
        let cur = self.frames.lock().unwrap_or_else(|e| e.into_inner());
        cur.iter().copied().take(max_depth).collect()
    }
}

pub struct ShadowScope<'a> {
    stack: &'a ShadowStack,
    depth: usize,
}

impl Drop for ShadowScope<'_> {
    fn drop(&mut self) {
        for _ in 0..self.depth {
            self.stack.pop();
        }
    }
}

/// Native return addresses from an unwinder.
#[derive(Debug, Clone)]
pub struct BacktraceFrames {
    /// Innermost frames to drop (logger and shim internals).
    pub skip: usize,
}

impl Default for BacktraceFrames {
    fn default() -> Self {
        Self { skip: 3 }
    }
}

impl FrameProvider for BacktraceFrames {
    fn capture(&self, max_depth: usize) -> Vec<u64> {
        let mut ips = Vec::with_capacity(32);
        backtrace::trace(|frame| {
            ips.push(frame.ip() as u64);
            true
        });
        let skip = self.skip.min(ips.len().saturating_sub(1));
        ips.drain(..skip);
        ips.reverse();
        ips.truncate(max_depth);
        ips
    }
}

/// Monotonic tick source.
pub trait Clock: Send + Sync {
    fn now(&self) -> u64;
    fn tick_rate(&self) -> u64;
}

/// Nanoseconds since construction.
#[derive(Debug, Clone)]
pub struct MonotonicClock {
    start: Instant,
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self {
            start: Instant::now(),
        }
    }
}

impl Clock for MonotonicClock {
    fn now(&self) -> u64 {
        self.start.elapsed().as_nanos() as u64
    }

    fn tick_rate(&self) -> u64 {
        1_000_000_000
    }
}

/// Deterministic clock: every read returns the current value and then moves
/// it forward by `step`. `advance` simulates work between events.
#[derive(Debug)]
pub struct ManualClock {
    ticks: AtomicU64,
    step: u64,
    rate: u64,
}

impl ManualClock {
    pub fn new(start: u64, step: u64) -> Self {
        Self {
            ticks: AtomicU64::new(start),
            step,
            rate: 1_000_000_000,
        }
    }

    pub fn advance(&self, ticks: u64) {
        self.ticks.fetch_add(ticks, Ordering::SeqCst);
    }

    pub fn peek(&self) -> u64 {
        self.ticks.load(Ordering::SeqCst)
    }
}

impl Clock for ManualClock {
    fn now(&self) -> u64 {
        self.ticks.fetch_add(self.step, Ordering::SeqCst)
    }

    fn tick_rate(&self) -> u64 {
        self.rate
    }
}
