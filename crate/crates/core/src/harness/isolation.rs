//! Checks that gold labels never reach a rendered prompt.

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledQuestion;
use crate::llm::{AuditEntry, PromptId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelLeak {
    pub seq: u64,
    pub template: PromptId,
    pub question_id: String,
    pub found: String,
}

/// Scans rendered prompts for any question's gold answer written in its
/// answer format (`"<answer key>": "<label>"`) and for the label field name
/// itself. Option letters alone are not evidence: every question shows them.
pub fn scan_for_labels(entries: &[AuditEntry], questions: &[LabeledQuestion]) -> Vec<LabelLeak> {
    let patterns: Vec<(&str, Regex)> = questions
        .iter()
        .map(|q| {
            let re = format!(
                r#""{}"\s*:\s*"?{}"?\s*[,}}\n]"#,
                regex::escape(&q.answer_key),
                regex::escape(&q.gold_label)
            );
            (q.question.question_id.as_str(), Regex::new(&re).expect("escaped pattern"))
        })
        .collect();
    let mut leaks = Vec::new();
    for e in entries {
        if let Some(i) = e.rendered.find("gold_label") {
            leaks.push(LabelLeak {
                seq: e.record.seq,
                template: e.record.template_id,
                question_id: String::new(),
                found: e.rendered[i..i + "gold_label".len()].to_string(),
            });
        }
        for (qid, re) in &patterns {
            if let Some(m) = re.find(&e.rendered) {
                leaks.push(LabelLeak {
                    seq: e.record.seq,
                    template: e.record.template_id,
                    question_id: qid.to_string(),
                    found: m.as_str().to_string(),
                });
            }
        }
    }
    leaks
}
