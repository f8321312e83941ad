use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ClientError;

/// Bounded retry with capped exponential backoff.
///
/// 400 is retryable by default: anomalous tokens can trigger spurious bad
/// requests server-side, and a status that survives every attempt is kept as
/// evidence on the token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
    pub retryable_statuses: BTreeSet<u16>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            backoff_base_ms: 500,
            backoff_cap_ms: 30_000,
            retryable_statuses: [400, 429, 500, 502, 503].into_iter().collect(),
        }
    }
}

impl RetryPolicy {
    /// Short delays for tests and local mock runs.
    pub fn fast(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            backoff_base_ms: 1,
            backoff_cap_ms: 4,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.max_attempts == 0 {
            return Err(ClientError::Config("max_attempts must be at least 1".into()));
        }
        if self.backoff_base_ms == 0 || self.backoff_cap_ms < self.backoff_base_ms {
            return Err(ClientError::Config(
                "backoff requires 0 < backoff_base_ms <= backoff_cap_ms".into(),
            ));
        }
        Ok(())
    }

    pub fn is_retryable(&self, status: u16) -> bool {
        self.retryable_statuses.contains(&status)
    }

    /// Delay before retry number `retry` (0 = first retry): base·2^retry, capped.
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.min(63)).unwrap_or(u64::MAX);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor).min(self.backoff_cap_ms))
    }
}
