//! Token bucket arithmetic over caller-supplied time.

/// Continuous-refill token bucket. Times are seconds on any monotonic scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBucket {
    capacity: f64,
    refill_rate: f64,
    tokens: f64,
    /// Instant the token count was last brought up to date. Runs ahead of
    /// wall time while callers hold reservations.
    last_refill: f64,
}

impl TokenBucket {
    pub const DEFAULT_CAPACITY: f64 = 10.0;
    pub const DEFAULT_RATE: f64 = 2.5;

    /// A full bucket.
    pub fn new(capacity: f64, refill_rate: f64, now: f64) -> Self {
        assert!(capacity >= 1.0, "bucket capacity must admit at least one request");
        assert!(refill_rate > 0.0, "refill rate must be positive");
        TokenBucket {
            capacity,
            refill_rate,
            tokens: capacity,
            last_refill: now,
        }
    }

    pub fn empty(capacity: f64, refill_rate: f64, now: f64) -> Self {
        let mut bucket = Self::new(capacity, refill_rate, now);
        bucket.tokens = 0.0;
        bucket
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn refill_rate(&self) -> f64 {
        self.refill_rate
    }

    /// Tokens available at `now`, without consuming any.
    pub fn available(&self, now: f64) -> f64 {
        if now <= self.last_refill {
            self.tokens
        } else {
            (self.tokens + self.refill_rate * (now - self.last_refill)).min(self.capacity)
        }
    }

    fn refill(&mut self, now: f64) {
        if now > self.last_refill {
            self.tokens = self.available(now);
            self.last_refill = now;
        }
    }

    /// Takes one token and returns how long the caller must wait before
    /// sending. A zero wait means a token was available immediately;
    /// otherwise the token is reserved for the instant it accrues.
    pub fn acquire(&mut self, now: f64) -> f64 {
        self.refill(now);
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            return (self.last_refill - now).max(0.0);
        }
        self.last_refill += (1.0 - self.tokens) / self.refill_rate;
        self.tokens = 0.0;
        self.last_refill - now
    }
}
