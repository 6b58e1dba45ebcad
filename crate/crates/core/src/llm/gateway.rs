use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::audit::AuditLog;
use super::backend::{ChatRequest, LlmBackend, LlmError};
use super::extract::{extract_json, OutputSchema};
use super::prompt::RenderedPrompt;
use super::usage::UsageLedger;
use super::vote::{vote_until_repeat, VoteError, VoteOutcome, DEFAULT_VOTE_ATTEMPTS};

/// Model invocations allowed per prompt when the output cannot be parsed.
pub const DEFAULT_FORMAT_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySettings {
    pub temperature: f64,
    pub max_output_tokens: Option<u32>,
    pub format_attempts: u32,
    pub vote_max_attempts: u32,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_output_tokens: None,
            format_attempts: DEFAULT_FORMAT_ATTEMPTS,
            vote_max_attempts: DEFAULT_VOTE_ATTEMPTS,
        }
    }
}

/// Front door to the model: sends prompts, accounts usage (failed attempts
/// included), writes the audit log and applies the parse and vote policies.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn LlmBackend>,
    settings: GatewaySettings,
    usage: Arc<UsageLedger>,
    audit: Option<Arc<AuditLog>>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn LlmBackend>, settings: GatewaySettings) -> Self {
        Self {
            backend,
            settings,
            usage: Arc::new(UsageLedger::new()),
            audit: None,
        }
    }

    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn with_usage(mut self, usage: Arc<UsageLedger>) -> Self {
        self.usage = usage;
        self
    }

    pub fn settings(&self) -> &GatewaySettings {
        &self.settings
    }

    pub fn usage(&self) -> &Arc<UsageLedger> {
        &self.usage
    }

    pub fn audit(&self) -> Option<&Arc<AuditLog>> {
        self.audit.as_ref()
    }

    /// One model invocation; the raw reply is returned unparsed.
    pub fn call(&self, prompt: &RenderedPrompt) -> Result<String, LlmError> {
        let request = ChatRequest {
            prompt_id: prompt.id,
            prompt: prompt.text.clone(),
            temperature: self.settings.temperature,
            max_output_tokens: self.settings.max_output_tokens,
        };
        let result = self.backend.complete(&request);
        let response = match &result {
            Ok(c) => {
                self.usage.record(&c.usage);
                Some(c.text.as_str())
            }
            Err(e) => {
                self.usage.record_failure(prompt.id, e.attempts());
                None
            }
        };
        if let Some(audit) = &self.audit {
            if let Err(e) = audit.record(prompt.id, &prompt.text, response) {
                tracing::warn!(error = %e, "audit log write failed");
            }
        }
        result.map(|c| c.text)
    }

    /// Calls until `parse` accepts the reply, re-asking on malformed output
    /// up to the format budget.
    pub fn call_with<T>(
        &self,
        prompt: &RenderedPrompt,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, LlmError> {
        let budget = self.settings.format_attempts.max(1);
        let mut last = String::new();
        for _ in 0..budget {
            let raw = self.call(prompt)?;
            match parse(&raw) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    tracing::debug!(prompt = %prompt.id, error = %e, "malformed model output");
                    last = e;
                }
            }
        }
        Err(LlmError::Malformed {
            prompt: prompt.id,
            attempts: budget,
            last,
        })
    }

    pub fn call_parsed<S: OutputSchema>(&self, prompt: &RenderedPrompt, schema: &S) -> Result<S::Output, LlmError> {
        self.call_with(prompt, |raw| extract_json(raw, schema).map_err(|e| e.to_string()))
    }

    /// Re-asks until one parsed value appears twice. Malformed replies
    /// consume vote attempts.
    pub fn vote<S>(&self, prompt: &RenderedPrompt, schema: &S) -> Result<VoteOutcome<S::Output>, LlmError>
    where
        S: OutputSchema,
        S::Output: PartialEq + Clone,
    {
        let outcome = vote_until_repeat(
            || self.call(prompt).map(|raw| extract_json(&raw, schema).ok()),
            self.settings.vote_max_attempts,
        );
        outcome.map_err(|e| match e {
            VoteError::Call(e) => e,
            VoteError::AllMalformed(n) => LlmError::Malformed {
                prompt: prompt.id,
                attempts: n,
                last: "no parseable vote".into(),
            },
            VoteError::BadBudget(n) => LlmError::Other(format!("vote budget {n} is below 2")),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::backend::ScriptedBackend;
    use crate::llm::extract::{SelectedTaskIdSchema, VerdictSchema, Verdict};
    use crate::llm::prompt::PromptId;

    fn gateway(responses: &[&str]) -> (Gateway, Arc<ScriptedBackend>) {
        let backend = Arc::new(ScriptedBackend::new(responses.iter().copied()));
        let gw = Gateway::new(backend.clone(), GatewaySettings::default()).with_audit(Arc::new(AuditLog::in_memory()));
        (gw, backend)
    }

    #[test]
    fn malformed_output_is_reasked_within_budget() {
        let (gw, backend) = gateway(&["nope", "still nope", r#"{"selected task id": 2}"#]);
        let p = RenderedPrompt::raw(PromptId::TaskMatch, "q");
        assert_eq!(gw.call_parsed(&p, &SelectedTaskIdSchema).unwrap(), 2);
        assert_eq!(backend.requests().len(), 3);
        let u = gw.usage().snapshot()[&PromptId::TaskMatch];
        assert_eq!((u.calls, u.attempts), (3, 3));
        assert_eq!(gw.audit().unwrap().len(), 3);
    }

    #[test]
    fn budget_exhaustion_surfaces_malformed() {
        let (gw, _) = gateway(&["a", "b", "c", "d"]);
        let p = RenderedPrompt::raw(PromptId::TaskInduction, "q");
        let err = gw.call_parsed(&p, &SelectedTaskIdSchema).unwrap_err();
        assert!(matches!(err, LlmError::Malformed { attempts: 3, .. }));
    }

    #[test]
    fn vote_counts_every_call() {
        let w = r#"{"correctness": "wrong"}"#;
        let c = r#"{"correctness": "correct"}"#;
        let (gw, _) = gateway(&[w, "garbage", c, c]);
        let p = RenderedPrompt::raw(PromptId::Verification, "v");
        let out = gw.vote(&p, &VerdictSchema).unwrap();
        assert_eq!(out.value, Verdict::Correct);
        assert_eq!((out.calls, out.malformed), (4, 1));
        assert_eq!(gw.usage().snapshot()[&PromptId::Verification].calls, 4);
    }

    #[test]
    fn backend_failure_is_accounted() {
        let (gw, _) = gateway(&[]);
        let p = RenderedPrompt::raw(PromptId::ZeroShot, "q");
        assert!(gw.call(&p).is_err());
        let u = gw.usage().snapshot()[&PromptId::ZeroShot];
        assert_eq!((u.calls, u.attempts, u.input_tokens), (1, 1, 0));
        assert_eq!(gw.audit().unwrap().entries()[0].response, None);
    }
}
