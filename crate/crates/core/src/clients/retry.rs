use log::warn;
use serde::{Deserialize, Serialize};

use super::{ClientConfig, ClientError};
use crate::clock::Clock;

/// Why a single attempt failed.
#[derive(Debug)]
pub enum AttemptError {
    /// The service did not answer before the attempt deadline.
    TimedOut,
    /// The service never answers; the caller waits out the deadline.
    Stalled,
    Unreachable(String),
    /// Non-retryable failure, returned as-is.
    Fatal(ClientError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub started_ms: u64,
    pub ended_ms: u64,
    pub outcome: String,
    /// Delay before the next attempt, if any.
    pub backoff_ms: Option<u64>,
}

/// Runs `attempt` up to `retries + 1` times. Each attempt gets the absolute
/// deadline `start + timeout_ms`; backoff doubles from `backoff_base_ms`.
pub fn call_with_retry<T>(
    service: &str,
    config: &ClientConfig,
    clock: &dyn Clock,
    mut attempt: impl FnMut(u64) -> Result<T, AttemptError>,
) -> Result<T, ClientError> {
    let mut log = Vec::new();
    let total = config.retries + 1;
    for n in 0..total {
        let started_ms = clock.now_ms();
        let deadline = started_ms + config.timeout_ms;
        let outcome = match attempt(deadline) {
            Ok(v) => return Ok(v),
            Err(AttemptError::Fatal(e)) => return Err(e),
            Err(AttemptError::Stalled) => {
                clock.sleep_until(deadline);
                "timeout".to_string()
            }
            Err(AttemptError::TimedOut) => "timeout".to_string(),
            Err(AttemptError::Unreachable(msg)) => format!("unreachable: {msg}"),
        };
        let backoff_ms = (n + 1 < total).then(|| config.backoff_base_ms.saturating_mul(1 << n.min(16)));
        let record = AttemptRecord {
            attempt: n + 1,
            started_ms,
            ended_ms: clock.now_ms(),
            outcome,
            backoff_ms,
        };
        warn!(
            "{service}: attempt {}/{total} failed ({}), backoff {:?} ms",
            record.attempt, record.outcome, record.backoff_ms
        );
        log.push(record);
        if let Some(b) = backoff_ms {
            clock.sleep_ms(b);
        }
    }
    let timed_out = log.last().is_some_and(|r| r.outcome == "timeout");
    Err(ClientError::Exhausted {
        service: service.to_string(),
        timed_out,
        attempts: log,
    })
}
