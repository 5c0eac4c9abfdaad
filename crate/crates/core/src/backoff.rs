//! Retry classes and their delay formulas.

/// HTTP failure class driving the retry policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorClass {
    /// HTTP 429.
    RateLimited,
    /// HTTP 500-504 and transport failures.
    ServerError,
    /// HTTP 400-404.
    ClientError,
}

impl ErrorClass {
    pub fn from_status(status: u16) -> Option<Self> {
        match status {
            429 => Some(ErrorClass::RateLimited),
            500..=504 => Some(ErrorClass::ServerError),
            400..=404 => Some(ErrorClass::ClientError),
            _ => None,
        }
    }
}

fn pow2(attempt: u32) -> f64 {
    let mut value = 1.0f64;
    for _ in 0..attempt.min(1100) {
        value *= 2.0;
    }
    value
}

/// Seconds to wait after the `attempt`-th failure (1-based).
///
/// `jitter` is a uniform draw from `[0, 1)`, used only for server errors.
pub fn backoff_delay(class: ErrorClass, attempt: u32, jitter: f64) -> f64 {
    debug_assert!(attempt >= 1);
    match class {
        ErrorClass::RateLimited => (pow2(attempt) * 5.0).min(60.0),
        ErrorClass::ServerError => pow2(attempt) + jitter,
        ErrorClass::ClientError => pow2(attempt),
    }
}

/// Per-class attempt budget. `None` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub rate_limited_attempts: Option<u32>,
    pub server_error_attempts: u32,
    pub client_error_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            rate_limited_attempts: None,
            server_error_attempts: 3,
            client_error_attempts: 3,
        }
    }
}

impl RetryPolicy {
    /// Whether a request that has failed `failures` times in `class` may be
    /// sent again.
    pub fn may_retry(&self, class: ErrorClass, failures: u32) -> bool {
        match class {
            ErrorClass::RateLimited => self.rate_limited_attempts.map_or(true, |max| failures < max),
            ErrorClass::ServerError => failures < self.server_error_attempts,
            ErrorClass::ClientError => failures < self.client_error_attempts,
        }
    }
}
