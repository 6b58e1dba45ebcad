//! Model access: prompt catalog, backends, output extraction, voting,
//! usage accounting and the prompt audit log.

pub mod audit;
pub mod backend;
pub mod extract;
pub mod gateway;
pub mod prompt;
pub mod simulated;
pub mod usage;
pub mod vote;

pub use audit::{read_audit_dir, AuditEntry, AuditLog, AuditRecord};
pub use backend::{
    ChatRequest, Completion, FnBackend, LlmBackend, LlmError, OpenAiBackend, ScriptedBackend, Transcript, UsageRecord,
};
pub use extract::{extract_json, extract_tagged, ExtractError, OutputSchema, TaskDraft, Verdict};
pub use gateway::{Gateway, GatewaySettings};
pub use prompt::{render, render_prompt, PromptError, PromptId, RenderedPrompt, SlotValue, Slots};
pub use simulated::SimulatedBackend;
pub use usage::{merge_usage, TokenUsage, UsageByPrompt, UsageLedger};
pub use vote::{vote_until_repeat, VoteOutcome};
