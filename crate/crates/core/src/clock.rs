//! Logical timestamps.
//!
//! Sequential composition of traces is ordered by a monotone logical counter;
//! the wall-clock reading is carried along as an annotation only.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timestamp {
    pub logical: u64,
    pub wall_ms: u64,
}

impl Timestamp {
    pub fn at(logical: u64) -> Self {
        Timestamp { logical, wall_ms: 0 }
    }
}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.logical
            .cmp(&other.logical)
            .then(self.wall_ms.cmp(&other.wall_ms))
    }
}

/// Monotone counter. One global instance serves the process; tests may use
/// their own.
#[derive(Debug, Default)]
pub struct LogicalClock {
    counter: AtomicU64,
}

static GLOBAL: LogicalClock = LogicalClock::starting_at(0);

impl LogicalClock {
    pub const fn starting_at(n: u64) -> Self {
        LogicalClock {
            counter: AtomicU64::new(n),
        }
    }

    pub fn global() -> &'static LogicalClock {
        &GLOBAL
    }

    /// Advance the counter and return the new reading.
    pub fn tick(&self) -> Timestamp {
        let logical = self.counter.fetch_add(1, Ordering::SeqCst) + 1;
        let wall_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Timestamp { logical, wall_ms }
    }

    pub fn current(&self) -> u64 {
        self.counter.load(Ordering::SeqCst)
    }

    /// Move the counter forward so the next tick is strictly after `ts`.
    pub fn observe(&self, ts: Timestamp) {
        self.counter.fetch_max(ts.logical, Ordering::SeqCst);
    }
}
