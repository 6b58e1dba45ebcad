use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::backend::UsageRecord;
use super::prompt::PromptId;

/// Accumulated usage for one prompt.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    /// Model invocations, including re-asks for malformed output and votes.
    pub calls: u64,
    /// Transport attempts, including retried HTTP failures.
    pub attempts: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub fn total_tokens(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }

    pub fn add(&mut self, other: &TokenUsage) {
        self.calls += other.calls;
        self.attempts += other.attempts;
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
    }

    fn saturating_sub(&self, other: &TokenUsage) -> TokenUsage {
        TokenUsage {
            calls: self.calls.saturating_sub(other.calls),
            attempts: self.attempts.saturating_sub(other.attempts),
            input_tokens: self.input_tokens.saturating_sub(other.input_tokens),
            output_tokens: self.output_tokens.saturating_sub(other.output_tokens),
        }
    }

    fn is_zero(&self) -> bool {
        *self == TokenUsage::default()
    }
}

pub type UsageByPrompt = BTreeMap<PromptId, TokenUsage>;

/// Adds `other` into `into`, prompt by prompt.
pub fn merge_usage(into: &mut UsageByPrompt, other: &UsageByPrompt) {
    for (id, u) in other {
        into.entry(*id).or_default().add(u);
    }
}

/// Thread-safe usage accumulator.
#[derive(Debug, Default)]
pub struct UsageLedger {
    totals: Mutex<UsageByPrompt>,
}

impl UsageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, usage: &UsageRecord) {
        let mut t = self.totals.lock().unwrap();
        let e = t.entry(usage.template_id).or_default();
        e.calls += 1;
        e.attempts += u64::from(usage.attempt_count);
        e.input_tokens += usage.input_tokens;
        e.output_tokens += usage.output_tokens;
    }

    /// Records an invocation that never produced a completion.
    pub fn record_failure(&self, prompt: PromptId, attempts: u32) {
        let mut t = self.totals.lock().unwrap();
        let e = t.entry(prompt).or_default();
        e.calls += 1;
        e.attempts += u64::from(attempts);
    }

    pub fn snapshot(&self) -> UsageByPrompt {
        self.totals.lock().unwrap().clone()
    }

    /// Usage accrued between two snapshots.
    pub fn delta(before: &UsageByPrompt, after: &UsageByPrompt) -> UsageByPrompt {
        after
            .iter()
            .map(|(id, a)| (*id, a.saturating_sub(before.get(id).unwrap_or(&TokenUsage::default()))))
            .filter(|(_, u)| !u.is_zero())
            .collect()
    }
}
