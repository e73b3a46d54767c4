//! Per-principal token buckets over an injectable clock.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

pub trait Clock: Send + Sync {
    /// Monotonic seconds since an arbitrary origin.
    fn now(&self) -> f64;
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Test clock advanced by hand.
#[derive(Clone, Default)]
pub struct ManualClock(Arc<Mutex<f64>>);

impl ManualClock {
    pub fn advance(&self, seconds: f64) {
        *self.0.lock() += seconds;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> f64 {
        *self.0.lock()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateLimit {
    /// Bucket capacity B.
    pub capacity: f64,
    /// Refill R in tokens per second.
    pub refill_per_sec: f64,
}

impl Default for RateLimit {
    fn default() -> Self {
        RateLimit {
            capacity: 200.0,
            refill_per_sec: 100.0,
        }
    }
}

struct Bucket {
    tokens: f64,
    last: f64,
}

pub struct RateLimiter {
    limit: RateLimit,
    clock: Arc<dyn Clock>,
    buckets: Mutex<HashMap<String, Bucket>>,
}

impl RateLimiter {
    pub fn new(limit: RateLimit, clock: Arc<dyn Clock>) -> Self {
        RateLimiter {
            limit,
            clock,
            buckets: Mutex::new(HashMap::new()),
        }
    }

    /// Takes one token from `principal_id`'s bucket if available.
    pub fn try_acquire(&self, principal_id: &str) -> bool {
        let now = self.clock.now();
        let mut buckets = self.buckets.lock();
        let b = buckets.entry(principal_id.to_string()).or_insert(Bucket {
            tokens: self.limit.capacity,
            last: now,
        });
        let elapsed = (now - b.last).max(0.0);
        b.tokens = (b.tokens + elapsed * self.limit.refill_per_sec).min(self.limit.capacity);
        b.last = now;
        if b.tokens >= 1.0 {
            b.tokens -= 1.0;
            true
        } else {
            false
        }
    }
}
