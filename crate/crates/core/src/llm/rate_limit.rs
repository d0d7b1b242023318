use std::sync::Mutex;
use std::time::Duration;

use super::clock::Clock;

#[derive(Debug)]
struct Bucket {
    rate: f64,
    capacity: f64,
    tokens: f64,
    last: Duration,
}

/// Token bucket shared by every caller of a gateway. Refills at
/// `rate` permits per second up to `capacity`.
#[derive(Debug)]
pub struct RateLimiter {
    bucket: Mutex<Bucket>,
}

impl RateLimiter {
    /// Capacity defaults to one second's worth of permits (at least one).
    pub fn new(rate: f64, now: Duration) -> Self {
        Self::with_capacity(rate, rate.ceil().max(1.0), now)
    }

    pub fn with_capacity(rate: f64, capacity: f64, now: Duration) -> Self {
        assert!(
            rate > 0.0 && capacity >= 1.0,
            "rate and capacity must be positive"
        );
        RateLimiter {
            bucket: Mutex::new(Bucket {
                rate,
                capacity,
                tokens: capacity,
                last: now,
            }),
        }
    }

    pub fn rate(&self) -> f64 {
        self.bucket.lock().unwrap().rate
    }

    pub fn capacity(&self) -> f64 {
        self.bucket.lock().unwrap().capacity
    }

    /// Changes the refill rate; tokens already in the bucket are kept.
    pub fn set_rate(&self, rate: f64) {
        assert!(rate > 0.0, "rate must be positive");
        self.bucket.lock().unwrap().rate = rate;
    }

    /// Takes one permit if available, else returns how long to wait.
    pub fn try_acquire(&self, now: Duration) -> Result<(), Duration> {
        let mut b = self.bucket.lock().unwrap();
        let elapsed = now.saturating_sub(b.last).as_secs_f64();
        b.tokens = (b.tokens + elapsed * b.rate).min(b.capacity);
        b.last = b.last.max(now);
        // tolerance so float drift never yields a zero-length wait
        if b.tokens >= 1.0 - 1e-9 {
            b.tokens = (b.tokens - 1.0).max(0.0);
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - b.tokens) / b.rate).max(Duration::from_nanos(1)))
        }
    }

    /// Blocks on `clock` until a permit is available.
    pub fn acquire(&self, clock: &dyn Clock) {
        while let Err(wait) = self.try_acquire(clock.now()) {
            clock.sleep(wait);
        }
    }
}
