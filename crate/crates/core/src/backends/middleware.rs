use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use crate::domain::{Modality, RetryConfig};

use super::{Backend, BackendError, BackendRequest, BackendResponse};

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub multiplier: f64,
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = self.multiplier.max(1.0).powi(retry as i32);
        let ms = (self.base_delay.as_millis() as f64 * factor).min(self.max_delay.as_millis() as f64);
        Duration::from_millis(ms as u64)
    }
}

impl From<&RetryConfig> for RetryPolicy {
    fn from(c: &RetryConfig) -> Self {
        RetryPolicy {
            max_attempts: c.max_attempts.max(1),
            base_delay: Duration::from_millis(c.base_delay_ms),
            max_delay: Duration::from_millis(c.max_delay_ms),
            multiplier: c.multiplier,
        }
    }
}

/// Retries transient failures with exponential backoff. Permanent errors pass through.
pub struct Retrying<B> {
    inner: B,
    policy: RetryPolicy,
    sleeper: Sleeper,
}

impl<B: Backend> Retrying<B> {
    pub fn new(inner: B, policy: RetryPolicy) -> Self {
        Retrying {
            inner,
            policy,
            sleeper: Arc::new(std::thread::sleep),
        }
    }

    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }
}

impl<B: Backend> Backend for Retrying<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn modality(&self) -> Modality {
        self.inner.modality()
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let mut attempt = 0;
        loop {
            match self.inner.complete(request) {
                Err(e) if e.is_transient() && attempt + 1 < self.policy.max_attempts => {
                    (self.sleeper)(self.policy.delay(attempt));
                    attempt += 1;
                }
                Err(BackendError::Transient(msg)) if attempt > 0 => {
                    return Err(BackendError::Transient(format!("{msg} (after {} attempts)", attempt + 1)))
                }
                other => return other,
            }
        }
    }
}

/// Bounds in-flight calls and, optionally, the request rate (token bucket with burst 1).
pub struct RateLimited<B> {
    inner: B,
    max_in_flight: usize,
    in_flight: Mutex<usize>,
    released: Condvar,
    interval: Option<Duration>,
    next_slot: Mutex<Instant>,
}

impl<B: Backend> RateLimited<B> {
    pub fn new(inner: B, max_in_flight: usize, requests_per_second: Option<f64>) -> Self {
        RateLimited {
            inner,
            max_in_flight: max_in_flight.max(1),
            in_flight: Mutex::new(0),
            released: Condvar::new(),
            interval: requests_per_second
                .filter(|r| *r > 0.0 && r.is_finite())
                .map(|r| Duration::from_secs_f64(1.0 / r)),
            next_slot: Mutex::new(Instant::now()),
        }
    }

    fn acquire(&self) {
        let mut n = self.in_flight.lock().expect("rate limiter poisoned");
        while *n >= self.max_in_flight {
            n = self.released.wait(n).expect("rate limiter poisoned");
        }
        *n += 1;
    }

    fn release(&self) {
        *self.in_flight.lock().expect("rate limiter poisoned") -= 1;
        self.released.notify_one();
    }

    fn pace(&self) {
        let Some(interval) = self.interval else { return };
        let wait = {
            let mut next = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + interval;
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

struct Permit<'a, B: Backend>(&'a RateLimited<B>);

impl<B: Backend> Drop for Permit<'_, B> {
    fn drop(&mut self) {
        self.0.release();
    }
}

impl<B: Backend> Backend for RateLimited<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn modality(&self) -> Modality {
        self.inner.modality()
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        self.acquire();
        let _permit = Permit(self);
        self.pace();
        self.inner.complete(request)
    }
}
