//! Time source shared by the limiter, retry waits and batch pauses.

use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

pub trait Clock: Send + Sync {
    /// Seconds on a monotonic scale with an arbitrary origin.
    fn now(&self) -> f64;

    fn sleep(&self, duration: Duration);

    /// Wall-clock seconds since the Unix epoch, for timestamps in output.
    fn unix_seconds(&self) -> i64;
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }

    fn sleep(&self, duration: Duration) {
        if !duration.is_zero() {
            std::thread::sleep(duration);
        }
    }

    fn unix_seconds(&self) -> i64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs() as i64)
            .unwrap_or(0)
    }
}

/// Simulated clock. `sleep` returns immediately and advances time; every
/// sleep is recorded.
#[derive(Debug, Default)]
pub struct ManualClock {
    state: Mutex<ManualState>,
}

#[derive(Debug, Default)]
struct ManualState {
    now: f64,
    sleeps: Vec<f64>,
}

impl ManualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, seconds: f64) {
        self.state.lock().unwrap().now += seconds;
    }

    pub fn sleeps(&self) -> Vec<f64> {
        self.state.lock().unwrap().sleeps.clone()
    }

    pub fn total_slept(&self) -> f64 {
        self.state.lock().unwrap().sleeps.iter().sum()
    }
}

impl Clock for ManualClock {
    fn now(&self) -> f64 {
        self.state.lock().unwrap().now
    }

    fn sleep(&self, duration: Duration) {
        let mut state = self.state.lock().unwrap();
        let secs = duration.as_secs_f64();
        state.sleeps.push(secs);
        state.now += secs;
    }

    fn unix_seconds(&self) -> i64 {
        1_700_000_000 + self.now() as i64
    }
}

/// Current calendar year (UTC).
pub fn current_year() -> i32 {
    time::OffsetDateTime::now_utc().year()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manual_clock_advances_on_sleep() {
        let c = ManualClock::new();
        c.sleep(Duration::from_millis(400));
        c.advance(1.0);
        assert!((c.now() - 1.4).abs() < 1e-12);
        assert_eq!(c.sleeps(), vec![0.4]);
    }
}
