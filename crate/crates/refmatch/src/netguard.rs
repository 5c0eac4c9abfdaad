//! Every outbound HTTP request goes through [`NetGuard`]: a shared token
//! bucket, a cap on requests in flight, and per-class retry with backoff.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use log::{debug, warn};
use refmatch_core::{backoff_delay, ErrorClass, RetryPolicy, TokenBucket};
use thiserror::Error;

use crate::clock::Clock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: Method,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Option<Vec<u8>>,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        HttpRequest {
            method: Method::Get,
            url: url.into(),
            headers: Vec::new(),
            body: None,
        }
    }

    /// POST with an `application/x-www-form-urlencoded` body.
    pub fn post_form(url: impl Into<String>, fields: &[(&str, &str)]) -> Self {
        let body = url::form_urlencoded::Serializer::new(String::new())
            .extend_pairs(fields)
            .finish();
        HttpRequest {
            method: Method::Post,
            url: url.into(),
            headers: vec![(
                "Content-Type".to_string(),
                "application/x-www-form-urlencoded".to_string(),
            )],
            body: Some(body.into_bytes()),
        }
    }

    pub fn header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_string(), value.to_string()));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

/// Connection-level failure: refused, reset, timed out.
#[derive(Debug, Clone, Error)]
#[error("transport failure: {0}")]
pub struct TransportError(pub String);

pub trait HttpTransport: Send + Sync {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

/// Blocking reqwest client.
#[derive(Debug, Clone)]
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("refmatch/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(ReqwestTransport { client })
    }
}

impl HttpTransport for ReqwestTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let mut builder = match request.method {
            Method::Get => self.client.get(&request.url),
            Method::Post => self.client.post(&request.url),
        };
        for (name, value) in &request.headers {
            builder = builder.header(name, value);
        }
        if let Some(body) = &request.body {
            builder = builder.body(body.clone());
        }
        let response = builder.send().map_err(|e| TransportError(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .bytes()
            .map_err(|e| TransportError(e.to_string()))?
            .to_vec();
        Ok(HttpResponse { status, body })
    }
}

/// One failed try, kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    pub status: Option<u16>,
    pub error: Option<String>,
    /// Backoff applied after this failure, seconds. Zero for the last one.
    pub delay: f64,
}

#[derive(Debug, Clone, Error)]
pub enum NetError {
    #[error("server error after {} attempts ({})", attempts.len(), describe(attempts))]
    ServerError { attempts: Vec<Attempt> },
    #[error("query execution error: HTTP {status} after {} attempts", attempts.len())]
    QueryExecution {
        status: u16,
        body: String,
        attempts: Vec<Attempt>,
    },
    #[error("still rate limited after {} attempts", attempts.len())]
    RateLimited { attempts: Vec<Attempt> },
    #[error("unexpected HTTP status {status}")]
    UnexpectedStatus { status: u16, body: String },
}

impl NetError {
    pub fn attempts(&self) -> &[Attempt] {
        match self {
            NetError::ServerError { attempts }
            | NetError::QueryExecution { attempts, .. }
            | NetError::RateLimited { attempts } => attempts,
            NetError::UnexpectedStatus { .. } => &[],
        }
    }

    pub fn status(&self) -> Option<u16> {
        match self {
            NetError::QueryExecution { status, .. } | NetError::UnexpectedStatus { status, .. } => {
                Some(*status)
            }
            _ => self.attempts().last().and_then(|a| a.status),
        }
    }
}

fn describe(attempts: &[Attempt]) -> String {
    attempts
        .iter()
        .map(|a| match (a.status, &a.error) {
            (Some(s), _) => s.to_string(),
            (None, Some(e)) => e.clone(),
            (None, None) => "?".to_string(),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Counting semaphore.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    ready: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Slots {
            free: Mutex::new(n.max(1)),
            ready: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.ready.wait(free).unwrap();
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.ready.notify_one();
    }
}

/// Consecutive server-error counter read by the batch runner.
#[derive(Debug, Default)]
pub struct ErrorCounter {
    consecutive: AtomicU32,
    gate: Mutex<()>,
}

impl ErrorCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_failure(&self) -> u32 {
        self.consecutive.fetch_add(1, Ordering::SeqCst) + 1
    }

    pub fn record_success(&self) {
        self.consecutive.store(0, Ordering::SeqCst);
    }

    pub fn consecutive(&self) -> u32 {
        self.consecutive.load(Ordering::SeqCst)
    }

    /// Sleeps `pause` and resets the counter once it reaches `threshold`.
    /// Concurrent callers wait behind the pausing one. Returns whether this
    /// call paused.
    pub fn pause_if_needed(&self, threshold: u32, pause: Duration, clock: &dyn Clock) -> bool {
        if threshold == 0 || self.consecutive() < threshold {
            return false;
        }
        let _gate = self.gate.lock().unwrap();
        if self.consecutive() < threshold {
            return false;
        }
        warn!(
            "{} consecutive server errors, pausing for {}s",
            self.consecutive(),
            pause.as_secs()
        );
        clock.sleep(pause);
        self.record_success();
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuardConfig {
    pub rate: f64,
    pub burst: f64,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

impl Default for GuardConfig {
    fn default() -> Self {
        GuardConfig {
            rate: TokenBucket::DEFAULT_RATE,
            burst: TokenBucket::DEFAULT_CAPACITY,
            max_in_flight: 10,
            retry: RetryPolicy::default(),
        }
    }
}

type JitterSource = Box<dyn Fn() -> f64 + Send + Sync>;

/// Rate-limited, retrying HTTP executor shared by every adapter.
pub struct NetGuard {
    transport: Arc<dyn HttpTransport>,
    clock: Arc<dyn Clock>,
    bucket: Mutex<TokenBucket>,
    slots: Slots,
    retry: RetryPolicy,
    jitter: JitterSource,
    errors: Arc<ErrorCounter>,
}

impl fmt::Debug for NetGuard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NetGuard")
            .field("bucket", &self.bucket)
            .field("retry", &self.retry)
            .finish_non_exhaustive()
    }
}

impl NetGuard {
    pub fn new(transport: Arc<dyn HttpTransport>, clock: Arc<dyn Clock>, config: GuardConfig) -> Self {
        let bucket = TokenBucket::new(config.burst, config.rate, clock.now());
        NetGuard {
            transport,
            clock,
            bucket: Mutex::new(bucket),
            slots: Slots::new(config.max_in_flight),
            retry: config.retry,
            jitter: Box::new(|| rand::random::<f64>()),
            errors: Arc::new(ErrorCounter::new()),
        }
    }

    /// Replaces the uniform `[0, 1)` jitter source.
    pub fn with_jitter(mut self, jitter: impl Fn() -> f64 + Send + Sync + 'static) -> Self {
        self.jitter = Box::new(jitter);
        self
    }

    pub fn with_error_counter(mut self, errors: Arc<ErrorCounter>) -> Self {
        self.errors = errors;
        self
    }

    pub fn error_counter(&self) -> Arc<ErrorCounter> {
        Arc::clone(&self.errors)
    }

    pub fn clock(&self) -> &dyn Clock {
        self.clock.as_ref()
    }

    fn wait_for_token(&self) {
        let wait = self.bucket.lock().unwrap().acquire(self.clock.now());
        if wait > 0.0 {
            debug!("rate limiter: waiting {wait:.3}s");
            self.clock.sleep(Duration::from_secs_f64(wait));
        }
    }

    /// Sends `request`, retrying per class until success or the class's
    /// attempt budget runs out.
    pub fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, NetError> {
        let mut attempts: Vec<Attempt> = Vec::new();
        let mut failures: HashMap<ErrorClass, u32> = HashMap::new();
        loop {
            self.wait_for_token();
            let result = {
                let _slot = self.slots.acquire();
                self.transport.send(request)
            };
            let (class, status, error, body) = match result {
                Ok(response) if response.is_success() => {
                    self.errors.record_success();
                    return Ok(response);
                }
                Ok(response) => match ErrorClass::from_status(response.status) {
                    Some(class) => (
                        class,
                        Some(response.status),
                        None,
                        String::from_utf8_lossy(&response.body).into_owned(),
                    ),
                    None => {
                        return Err(NetError::UnexpectedStatus {
                            status: response.status,
                            body: String::from_utf8_lossy(&response.body).into_owned(),
                        })
                    }
                },
                Err(e) => (ErrorClass::ServerError, None, Some(e.0), String::new()),
            };

            if class == ErrorClass::ServerError {
                self.errors.record_failure();
            }
            let count = failures.entry(class).or_insert(0);
            *count += 1;
            let count = *count;

            if !self.retry.may_retry(class, count) {
                attempts.push(Attempt { status, error, delay: 0.0 });
                warn!("{} {}: giving up after {} attempts", method_name(request.method), request.url, attempts.len());
                return Err(match class {
                    ErrorClass::ServerError => NetError::ServerError { attempts },
                    ErrorClass::ClientError => NetError::QueryExecution {
                        status: status.unwrap_or(0),
                        body,
                        attempts,
                    },
                    ErrorClass::RateLimited => NetError::RateLimited { attempts },
                });
            }

            let delay = backoff_delay(class, count, (self.jitter)());
            warn!(
                "{} {}: {:?} (status {:?}), retry {} in {:.2}s",
                method_name(request.method),
                request.url,
                class,
                status,
                count,
                delay
            );
            attempts.push(Attempt { status, error, delay });
            self.clock.sleep(Duration::from_secs_f64(delay));
        }
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Get => "GET",
        Method::Post => "POST",
    }
}

/// Transport that replays canned responses, for tests and offline runs.
#[derive(Debug, Default)]
pub struct ScriptedTransport {
    responses: Mutex<std::collections::VecDeque<Result<HttpResponse, TransportError>>>,
    seen: Mutex<Vec<HttpRequest>>,
}

impl ScriptedTransport {
    pub fn new(responses: impl IntoIterator<Item = Result<HttpResponse, TransportError>>) -> Self {
        ScriptedTransport {
            responses: Mutex::new(responses.into_iter().collect()),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn statuses(statuses: &[u16]) -> Self {
        Self::new(statuses.iter().map(|&status| {
            Ok(HttpResponse {
                status,
                body: Vec::new(),
            })
        }))
    }

    pub fn requests(&self) -> Vec<HttpRequest> {
        self.seen.lock().unwrap().clone()
    }
}

impl HttpTransport for ScriptedTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.seen.lock().unwrap().push(request.clone());
        self.responses
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(TransportError("script exhausted".to_string())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    fn guard(transport: Arc<ScriptedTransport>, clock: Arc<ManualClock>) -> NetGuard {
        NetGuard::new(transport, clock, GuardConfig::default()).with_jitter(|| 0.5)
    }

    #[test]
    fn server_errors_then_success() {
        let t = Arc::new(ScriptedTransport::statuses(&[503, 503, 200]));
        let clock = Arc::new(ManualClock::new());
        let g = guard(t.clone(), clock.clone());
        let resp = g.execute(&HttpRequest::get("http://x/")).unwrap();
        assert_eq!(resp.status, 200);
        assert_eq!(clock.sleeps(), vec![2.5, 4.5]);
        assert_eq!(t.requests().len(), 3);
        assert_eq!(g.error_counter().consecutive(), 0);
    }

    #[test]
    fn server_error_after_three_attempts() {
        let t = Arc::new(ScriptedTransport::statuses(&[500, 500, 500, 200]));
        let clock = Arc::new(ManualClock::new());
        let g = guard(t.clone(), clock.clone());
        match g.execute(&HttpRequest::get("http://x/")) {
            Err(NetError::ServerError { attempts }) => assert_eq!(attempts.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(t.requests().len(), 3);
        assert_eq!(g.error_counter().consecutive(), 3);
    }

    #[test]
    fn client_error_raises_query_execution() {
        let t = Arc::new(ScriptedTransport::statuses(&[400, 400, 400]));
        let clock = Arc::new(ManualClock::new());
        let g = guard(t.clone(), clock.clone());
        match g.execute(&HttpRequest::get("http://x/")) {
            Err(NetError::QueryExecution { status, attempts, .. }) => {
                assert_eq!(status, 400);
                assert_eq!(attempts.len(), 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(clock.sleeps(), vec![2.0, 4.0]);
    }

    #[test]
    fn rate_limited_backoff_schedule() {
        let t = Arc::new(ScriptedTransport::statuses(&[429, 429, 429, 429, 429, 200]));
        let clock = Arc::new(ManualClock::new());
        let g = guard(t.clone(), clock.clone());
        g.execute(&HttpRequest::get("http://x/")).unwrap();
        assert_eq!(clock.sleeps(), vec![10.0, 20.0, 40.0, 60.0, 60.0]);
    }

    #[test]
    fn transport_failures_count_as_server_errors() {
        let t = Arc::new(ScriptedTransport::new(vec![
            Err(TransportError("refused".into())),
            Ok(HttpResponse { status: 200, body: b"ok".to_vec() }),
        ]));
        let clock = Arc::new(ManualClock::new());
        let g = guard(t, clock.clone());
        assert_eq!(g.execute(&HttpRequest::get("http://x/")).unwrap().body, b"ok");
        assert_eq!(clock.sleeps(), vec![2.5]);
    }

    #[test]
    fn unexpected_status_is_not_retried() {
        let t = Arc::new(ScriptedTransport::statuses(&[418]));
        let clock = Arc::new(ManualClock::new());
        let g = guard(t.clone(), clock);
        assert!(matches!(
            g.execute(&HttpRequest::get("http://x/")),
            Err(NetError::UnexpectedStatus { status: 418, .. })
        ));
    }

    #[test]
    fn limiter_delays_eleventh_request() {
        let t = Arc::new(ScriptedTransport::statuses(&[200; 12]));
        let clock = Arc::new(ManualClock::new());
        let g = guard(t, clock.clone());
        for _ in 0..10 {
            g.execute(&HttpRequest::get("http://x/")).unwrap();
        }
        assert!(clock.sleeps().is_empty());
        g.execute(&HttpRequest::get("http://x/")).unwrap();
        let sleeps = clock.sleeps();
        assert_eq!(sleeps.len(), 1);
        assert!((sleeps[0] - 0.4).abs() < 1e-9);
    }

    #[test]
    fn error_counter_pause() {
        let counter = ErrorCounter::new();
        let clock = ManualClock::new();
        for _ in 0..9 {
            counter.record_failure();
        }
        assert!(!counter.pause_if_needed(10, Duration::from_secs(300), &clock));
        counter.record_failure();
        assert!(counter.pause_if_needed(10, Duration::from_secs(300), &clock));
        assert_eq!(clock.sleeps(), vec![300.0]);
        assert_eq!(counter.consecutive(), 0);
    }

    #[test]
    fn form_body_is_encoded() {
        let r = HttpRequest::post_form("http://x/", &[("query", "SELECT * { ?s ?p \"a b\" }")]);
        assert_eq!(
            String::from_utf8(r.body.unwrap()).unwrap(),
            "query=SELECT+*+%7B+%3Fs+%3Fp+%22a+b%22+%7D"
        );
    }
}
