#![allow(dead_code)]

use std::sync::Arc;

use segpt_core::corpus::{DocumentSource, FixtureCorpus, NoDocuments, WordPunctTokenizer};
use segpt_core::llm::{AuditLog, Gateway, GatewaySettings, LlmBackend};
use segpt_core::memory::{Experience, Memory, MemoryConfig, PROCEDURE_HEADING, SUGGESTIONS_HEADING};
use segpt_core::pipeline::{Agent, EventLog, PipelineSettings};
use segpt_core::retrieval::{Embedder, HashEmbedder};

pub const DIM: usize = 64;

pub fn embedder() -> Arc<dyn Embedder> {
    Arc::new(HashEmbedder::new(DIM, 11))
}

pub fn fixture_corpus() -> Arc<dyn DocumentSource> {
    let entries = vec![
        ("doc:a".to_string(), "Rivers".to_string(), "Rivers carry water to the sea.".to_string()),
        ("doc:b".to_string(), "Mountains".to_string(), "Mountains rise above the plains.".to_string()),
    ];
    Arc::new(FixtureCorpus::from_entries(entries, embedder(), &WordPunctTokenizer, 512).unwrap())
}

pub fn no_documents() -> Arc<dyn DocumentSource> {
    Arc::new(NoDocuments)
}

pub struct Rig {
    pub agent: Agent,
    pub audit: Arc<AuditLog>,
}

pub fn rig(backend: Arc<dyn LlmBackend>, corpus: Arc<dyn DocumentSource>, memory: Memory) -> Rig {
    let audit = Arc::new(AuditLog::in_memory());
    let gateway = Gateway::new(backend, GatewaySettings::default()).with_audit(audit.clone());
    let agent = Agent::new(
        gateway,
        embedder(),
        corpus,
        memory,
        PipelineSettings::default(),
        EventLog::in_memory(),
    );
    Rig { agent, audit }
}

pub fn empty_memory() -> Memory {
    Memory::new(MemoryConfig::new(DIM))
}

pub fn task_json(name: &str, description: &str) -> String {
    format!("```json\n{}\n```", serde_json::json!({"task name": name, "task description": description}))
}

pub fn id_json(id: i64) -> String {
    format!("```json\n{{\"selected task id\": {id}}}\n```")
}

pub fn ids_json(ids: &[i64]) -> String {
    format!("{{\"selected task ids\": {ids:?}}}")
}

pub fn verdict_json(v: &str) -> String {
    format!("{{\"correctness\": \"{v}\"}}")
}

pub fn exp_json(suggestions: &[&str], procedure: &[&str]) -> String {
    format!(
        "```json\n{}\n```",
        serde_json::json!({SUGGESTIONS_HEADING: suggestions, PROCEDURE_HEADING: procedure})
    )
}

pub fn exp(suggestions: &[&str], procedure: &[&str]) -> Experience {
    Experience::new(
        suggestions.iter().map(|s| s.to_string()).collect(),
        procedure.iter().map(|s| s.to_string()).collect(),
    )
    .unwrap()
}

pub fn new_question(text: &str) -> String {
    format!("<New Question>\n{text}\n</New Question>")
}

/// Each verdict twice, so every vote settles on its second call.
pub fn doubled_verdicts(verdicts: &[&str]) -> Vec<String> {
    verdicts.iter().flat_map(|v| [verdict_json(v), verdict_json(v)]).collect()
}
