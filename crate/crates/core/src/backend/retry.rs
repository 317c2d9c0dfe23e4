use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{BackendError, CompletionBackend, CompletionRequest};

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// Bounded exponential backoff.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_delay_ms: u64,
    pub multiplier: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_delay_ms: 1000,
            multiplier: 2,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            initial_delay_ms: 0,
            multiplier: 2,
        }
    }

    /// Delay slept after failed attempt `attempt` (0-based).
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let factor = u64::from(self.multiplier.max(1)).saturating_pow(attempt);
        Duration::from_millis(self.initial_delay_ms.saturating_mul(factor))
    }
}

/// Wraps a backend with retries on retryable errors.
pub struct Retrying<B> {
    inner: B,
    policy: RetryPolicy,
    sleeper: Sleeper,
}

impl<B> Retrying<B> {
    pub fn new(inner: B, policy: RetryPolicy) -> Self {
        Self {
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

impl<B: CompletionBackend> CompletionBackend for Retrying<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let attempts = self.policy.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            match self.inner.complete(request) {
                Ok(text) => return Ok(text),
                Err(err) if err.is_retryable() && attempt + 1 < attempts => {
                    let delay = self.policy.delay_after(attempt);
                    warn!(tag = %request.tag, attempt, ?delay, error = %err, "retrying completion");
                    (self.sleeper)(delay);
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Mutex;

    use super::*;

    struct Flaky {
        failures_left: Mutex<u32>,
        calls: Mutex<u32>,
        error: fn() -> BackendError,
    }

    impl CompletionBackend for Flaky {
        fn complete(&self, _: &CompletionRequest) -> Result<String, BackendError> {
            *self.calls.lock().unwrap() += 1;
            let mut left = self.failures_left.lock().unwrap();
            if *left > 0 {
                *left -= 1;
                return Err((self.error)());
            }
            Ok("done".into())
        }
    }

    fn flaky(failures: u32, error: fn() -> BackendError) -> Flaky {
        Flaky {
            failures_left: Mutex::new(failures),
            calls: Mutex::new(0),
            error,
        }
    }

    fn recorder() -> (Sleeper, Arc<Mutex<Vec<Duration>>>) {
        let slept = Arc::new(Mutex::new(Vec::new()));
        let sink = slept.clone();
        (Arc::new(move |d| sink.lock().unwrap().push(d)), slept)
    }

    #[test]
    fn default_policy_delays() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_after(0), Duration::from_secs(1));
        assert_eq!(p.delay_after(1), Duration::from_secs(2));
        assert_eq!(p.delay_after(2), Duration::from_secs(4));
    }

    #[test]
    fn recovers_within_bound() {
        let (sleeper, slept) = recorder();
        let backend = Retrying::new(
            flaky(2, || BackendError::Transport("down".into())),
            RetryPolicy::default(),
        )
        .with_sleeper(sleeper);
        assert_eq!(
            backend.complete(&CompletionRequest::new("t", "s")).unwrap(),
            "done"
        );
        assert_eq!(*backend.inner.calls.lock().unwrap(), 3);
        assert_eq!(
            *slept.lock().unwrap(),
            [Duration::from_secs(1), Duration::from_secs(2)]
        );
    }

    #[test]
    fn gives_up_after_max_attempts() {
        let (sleeper, slept) = recorder();
        let backend = Retrying::new(
            flaky(10, || BackendError::EmptyCompletion),
            RetryPolicy::default(),
        )
        .with_sleeper(sleeper);
        assert!(matches!(
            backend.complete(&CompletionRequest::new("t", "s")),
            Err(BackendError::EmptyCompletion)
        ));
        assert_eq!(*backend.inner.calls.lock().unwrap(), 3);
        let slept = slept.lock().unwrap();
        assert!(slept.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn fatal_errors_are_not_retried() {
        let (sleeper, slept) = recorder();
        let backend = Retrying::new(
            flaky(1, || BackendError::FixtureExhausted { served: 0 }),
            RetryPolicy::default(),
        )
        .with_sleeper(sleeper);
        assert!(backend.complete(&CompletionRequest::new("t", "s")).is_err());
        assert_eq!(*backend.inner.calls.lock().unwrap(), 1);
        assert!(slept.lock().unwrap().is_empty());
    }

    proptest::proptest! {
        #[test]
        fn attempts_bounded_and_delays_monotone(max_attempts in 1u32..6, failures in 0u32..10, initial in 0u64..50, mult in 1u32..4) {
            let (sleeper, slept) = recorder();
            let policy = RetryPolicy { max_attempts, initial_delay_ms: initial, multiplier: mult };
            let backend = Retrying::new(flaky(failures, || BackendError::Transport("x".into())), policy)
                .with_sleeper(sleeper);
            let result = backend.complete(&CompletionRequest::new("t", "s"));
            let calls = *backend.inner.calls.lock().unwrap();
            proptest::prop_assert!(calls <= max_attempts);
            proptest::prop_assert_eq!(result.is_ok(), failures < max_attempts);
            let slept = slept.lock().unwrap();
            proptest::prop_assert!(slept.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
