use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::wire::Usage;

/// Dollar prices per 1,000 tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub prompt_per_1k: f64,
    pub completion_per_1k: f64,
}

impl PriceTable {
    /// List price of `gpt-4-1106-preview` at release.
    pub const GPT4_1106_PREVIEW: PriceTable = PriceTable {
        prompt_per_1k: 0.01,
        completion_per_1k: 0.03,
    };

    pub fn cost(&self, usage: &LedgerSnapshot) -> f64 {
        usage.prompt_tokens as f64 / 1000.0 * self.prompt_per_1k
            + usage.completion_tokens as f64 / 1000.0 * self.completion_per_1k
    }
}

impl Default for PriceTable {
    fn default() -> Self {
        Self::GPT4_1106_PREVIEW
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub requests: u64,
}

impl LedgerSnapshot {
    pub fn add_usage(&mut self, usage: &Usage) {
        self.prompt_tokens += usage.prompt_tokens;
        self.completion_tokens += usage.completion_tokens;
    }
}

impl std::ops::Add for LedgerSnapshot {
    type Output = LedgerSnapshot;

    fn add(self, rhs: Self) -> Self {
        Self {
            prompt_tokens: self.prompt_tokens + rhs.prompt_tokens,
            completion_tokens: self.completion_tokens + rhs.completion_tokens,
            requests: self.requests + rhs.requests,
        }
    }
}

/// Running token and request counters, safe to update from many tasks.
#[derive(Debug, Default)]
pub struct CostLedger {
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
    requests: AtomicU64,
    price: PriceTable,
}

impl CostLedger {
    pub fn new(price: PriceTable) -> Self {
        Self {
            price,
            ..Default::default()
        }
    }

    pub fn record_usage(&self, usage: &Usage) {
        self.prompt_tokens
            .fetch_add(usage.prompt_tokens, Ordering::Relaxed);
        self.completion_tokens
            .fetch_add(usage.completion_tokens, Ordering::Relaxed);
    }

    /// Counts one HTTP exchange that produced a response, successful or not.
    pub fn record_request(&self) {
        self.requests.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            prompt_tokens: self.prompt_tokens.load(Ordering::Relaxed),
            completion_tokens: self.completion_tokens.load(Ordering::Relaxed),
            requests: self.requests.load(Ordering::Relaxed),
        }
    }

    pub fn price(&self) -> PriceTable {
        self.price
    }

    pub fn total(&self) -> f64 {
        self.price.cost(&self.snapshot())
    }
}

/// Two-decimal dollar string.
pub fn format_currency(amount: f64) -> String {
    format!("{amount:.2}")
}
