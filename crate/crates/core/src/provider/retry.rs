//! Retry with exponential backoff for transient provider failures.

use std::future::Future;
use std::time::Duration;

use rand::Rng;

use super::ProviderError;

/// Backoff schedule: `base_delay * multiplier^i`, jittered by
/// `±jitter_frac`, for up to `max_attempts` total calls.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub multiplier: f64,
    pub jitter_frac: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_delay: Duration::from_secs(1),
            multiplier: 2.0,
            jitter_frac: 0.2,
        }
    }
}

impl RetryPolicy {
    /// No retries at all: a single attempt.
    pub fn none() -> Self {
        Self {
            max_attempts: 1,
            ..Self::default()
        }
    }

    /// Delay before retry number `retry` (0-based), given a jitter draw in
    /// `[-1, 1]`.
    pub fn delay_for(&self, retry: u32, jitter_unit: f64) -> Duration {
        let base = self.base_delay.as_secs_f64() * self.multiplier.powi(retry as i32);
        let jittered = base * (1.0 + self.jitter_frac * jitter_unit.clamp(-1.0, 1.0));
        Duration::from_secs_f64(jittered.max(0.0))
    }
}

/// Runs `op` until it succeeds, fails non-retryably, or the attempt budget is
/// spent. Never issues more than `policy.max_attempts` calls.
pub async fn with_retry<T, F, Fut>(policy: &RetryPolicy, mut op: F) -> Result<T, ProviderError>
where
    F: FnMut() -> Fut,
    Fut: Future<Output = Result<T, ProviderError>>,
{
    let attempts = policy.max_attempts.max(1);
    let mut last = None;
    for attempt in 0..attempts {
        match op().await {
            Ok(value) => return Ok(value),
            Err(err) if !err.is_retryable() => return Err(err),
            Err(err) => {
                last = Some(err);
                if attempt + 1 < attempts {
                    let jitter: f64 = rand::thread_rng().gen_range(-1.0..=1.0);
                    tokio::time::sleep(policy.delay_for(attempt, jitter)).await;
                }
            }
        }
    }
    Err(ProviderError::Exhausted {
        attempts,
        last: Box::new(last.expect("at least one attempt ran")),
    })
}
