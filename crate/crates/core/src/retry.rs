//! Bounded retry with exponential backoff for outbound calls.

use std::future::Future;
use std::time::Duration;

use tokio::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    /// Wall-clock budget across all attempts, including backoff sleeps.
    pub deadline: Option<Duration>,
}

impl RetryPolicy {
    /// Remote vision inference: 3 attempts, 250 ms initial backoff, 30 s overall.
    pub const VISION: Self = Self {
        attempts: 3,
        initial_backoff: Duration::from_millis(250),
        deadline: Some(Duration::from_secs(30)),
    };

    /// Chat completions: 3 attempts, 250 ms initial backoff; the per-request
    /// timeout bounds each attempt.
    pub const LLM: Self = Self {
        attempts: 3,
        initial_backoff: Duration::from_millis(250),
        deadline: None,
    };
}

/// Outcome of a single attempt.
#[derive(Debug)]
pub enum Attempt<E> {
    /// Worth retrying (transport failure, 5xx, 429).
    Transient(E),
    /// Retrying cannot help.
    Fatal(E),
}

/// Returned through `From` when the policy deadline expires mid-attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeadlineExceeded;

/// Runs `op` until it succeeds, fails fatally, or the policy is exhausted.
/// Returns the last error on exhaustion.
pub async fn retry<T, E, F, Fut>(policy: RetryPolicy, mut op: F) -> Result<T, E>
where
    E: From<DeadlineExceeded>,
    F: FnMut(u32) -> Fut,
    Fut: Future<Output = Result<T, Attempt<E>>>,
{
    let started = Instant::now();
    let mut backoff = policy.initial_backoff;
    let mut attempt = 0;
    loop {
        attempt += 1;
        let outcome = match policy.deadline {
            Some(d) => {
                let left = d.saturating_sub(started.elapsed());
                tokio::time::timeout(left, op(attempt))
                    .await
                    .map_err(|_| E::from(DeadlineExceeded))?
            }
            None => op(attempt).await,
        };
        match outcome {
            Ok(v) => return Ok(v),
            Err(Attempt::Fatal(e)) => return Err(e),
            Err(Attempt::Transient(e)) => {
                let out_of_time = policy
                    .deadline
                    .is_some_and(|d| started.elapsed() + backoff >= d);
                if attempt >= policy.attempts || out_of_time {
                    return Err(e);
                }
                tracing::debug!(attempt, ?backoff, "transient failure, retrying");
                tokio::time::sleep(backoff).await;
                backoff *= 2;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[derive(Debug, PartialEq)]
    enum E {
        Boom(u32),
        Late,
    }

    impl From<DeadlineExceeded> for E {
        fn from(_: DeadlineExceeded) -> Self {
            E::Late
        }
    }

    #[tokio::test(start_paused = true)]
    async fn backs_off_exponentially_then_gives_up() {
        let calls = AtomicU32::new(0);
        let t0 = Instant::now();
        let r: Result<(), E> = retry(RetryPolicy::VISION, |n| {
            calls.fetch_add(1, Ordering::SeqCst);
            async move { Err(Attempt::Transient(E::Boom(n))) }
        })
        .await;
        assert_eq!(r, Err(E::Boom(3)));
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        assert_eq!(t0.elapsed(), Duration::from_millis(250 + 500));
    }

    #[tokio::test(start_paused = true)]
    async fn fatal_errors_are_not_retried() {
        let calls = AtomicU32::new(0);
        let r: Result<(), E> = retry(RetryPolicy::LLM, |n| {
            calls.fetch_add(1, Ordering::SeqCst);
            async move { Err(Attempt::Fatal(E::Boom(n))) }
        })
        .await;
        assert_eq!(r, Err(E::Boom(1)));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[tokio::test(start_paused = true)]
    async fn deadline_cuts_a_hanging_attempt() {
        let r: Result<(), E> = retry(RetryPolicy::VISION, |_| async {
            tokio::time::sleep(Duration::from_secs(3600)).await;
            Ok(())
        })
        .await;
        assert_eq!(r, Err(E::Late));
    }

    #[tokio::test(start_paused = true)]
    async fn succeeds_after_transient_failure() {
        let r: Result<u32, E> = retry(RetryPolicy::LLM, |n| async move {
            if n < 2 {
                Err(Attempt::Transient(E::Boom(n)))
            } else {
                Ok(n)
            }
        })
        .await;
        assert_eq!(r, Ok(2));
    }
}
