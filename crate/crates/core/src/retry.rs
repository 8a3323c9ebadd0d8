use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Exponential backoff for provider calls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 250,
            max_delay_ms: 8_000,
        }
    }
}

/// One failed attempt. Non-transient faults stop the retry loop early.
#[derive(Debug, Clone)]
pub struct Fault {
    pub transient: bool,
    pub message: String,
}

impl Fault {
    pub fn transient(message: impl Into<String>) -> Self {
        Fault {
            transient: true,
            message: message.into(),
        }
    }

    pub fn permanent(message: impl Into<String>) -> Self {
        Fault {
            transient: false,
            message: message.into(),
        }
    }
}

impl RetryPolicy {
    pub fn delay_for(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.saturating_sub(1).min(20);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }

    /// Runs `op` until it succeeds, fails permanently, or attempts run out.
    /// Returns the value (or last fault) with the number of attempts made.
    pub(crate) fn run<T>(&self, mut op: impl FnMut(u32) -> Result<T, Fault>) -> (Result<T, Fault>, u32) {
        let max = self.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match op(attempt) {
                Ok(v) => return (Ok(v), attempt),
                Err(fault) if !fault.transient || attempt >= max => return (Err(fault), attempt),
                Err(fault) => {
                    log::warn!("attempt {attempt} failed, retrying: {}", fault.message);
                    std::thread::sleep(self.delay_for(attempt));
                    attempt += 1;
                }
            }
        }
    }
}
