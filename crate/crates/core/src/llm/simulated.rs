//! A deterministic, rule-based stand-in model for offline runs.
//!
//! It reads the rendered prompt, recognises which template produced it and
//! answers in that template's output format. Answers are chosen by lexical
//! overlap, so runs are reproducible without any network access. It is a
//! plumbing aid, not a measure of anything.

use std::collections::{BTreeSet, HashSet};

use serde_json::json;
use sha2::{Digest, Sha256};

use super::backend::{approx_tokens, ChatRequest, Completion, LlmBackend, LlmError, UsageRecord};
use super::prompt::PromptId;
use crate::memory::{MAX_INSIGHTS, PROCEDURE_HEADING, SUGGESTIONS_HEADING};

const REFER_LINE: &str = "Please refer to the above experience to answer the following question.\n\n";
const ANSWER_KEYS: [&str; 3] = ["correct option ID", "correct choice ID", "answer"];

#[derive(Debug, Default, Clone, Copy)]
pub struct SimulatedBackend;

impl SimulatedBackend {
    pub fn new() -> Self {
        Self
    }
}

impl LlmBackend for SimulatedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        let text = respond(request.prompt_id, &request.prompt);
        Ok(Completion {
            usage: UsageRecord {
                template_id: request.prompt_id,
                input_tokens: approx_tokens(&request.prompt),
                output_tokens: approx_tokens(&text),
                attempt_count: 1,
            },
            text,
        })
    }
}

fn respond(id: PromptId, prompt: &str) -> String {
    match id {
        PromptId::TaskInduction => {
            let q = between(prompt, "<Task Example >\n", "\n</Task Example >").unwrap_or(prompt);
            let (name, description) = induce_task(q);
            fenced(&json!({"task name": name, "task description": description}))
        }
        PromptId::TaskMatch => {
            let target = between(prompt, "<Target Task>\n", "\n</Target Task>").unwrap_or("");
            let id = candidates(prompt)
                .iter()
                .position(|c| *c == target)
                .map_or(-1, |i| i as i64 + 1);
            fenced(&json!({"selected task id": id}))
        }
        PromptId::SourceSelection => {
            let target = between(prompt, "<Target Task>\n", "\n</Target Task>").unwrap_or("");
            let target_words = words(target);
            let ids: Vec<usize> = candidates(prompt)
                .iter()
                .enumerate()
                .filter(|(_, c)| overlap(&target_words, &words(c)) >= 3)
                .map(|(i, _)| i + 1)
                .take(3)
                .collect();
            fenced(&json!({"selected task ids": ids}))
        }
        PromptId::ExperienceTransfer => {
            let mut suggestions = Vec::new();
            let mut procedure = Vec::new();
            for block in blocks(prompt, "Source Task") {
                let exp = block.split_once("Task Experience:\n").map_or("", |(_, e)| e);
                let (s, p) = parse_experience_text(exp);
                suggestions.extend(s);
                procedure.extend(p);
            }
            experience_reply(dedup(suggestions), dedup(procedure))
        }
        PromptId::ExperienceMerge => {
            let (s, p1, p2) = parse_merge_block(prompt);
            let mut procedure = p1;
            procedure.extend(p2);
            experience_reply(dedup(s), dedup(procedure))
        }
        PromptId::QuestionGeneration => {
            let reference = between(prompt, "<Reference Text>\n", "\n</Reference Text>").unwrap_or("");
            let example = between(prompt, "<Example Question>\n", "\n</Example Question>").unwrap_or("");
            let lead: Vec<&str> = reference.split_whitespace().take(24).collect();
            let question = if lead.is_empty() {
                example.to_string()
            } else {
                format!("Context: {}\n{}", lead.join(" "), example)
            };
            format!("<New Question>\n{question}\n</New Question>")
        }
        PromptId::PracticeAnswer => {
            let question = prompt.rsplit_once(REFER_LINE).map_or(prompt, |(_, q)| q);
            let question = question
                .strip_suffix("\n\nPlease provide specific, detailed, and comprehensive steps of your thought.")
                .unwrap_or(question);
            answer(question, true)
        }
        PromptId::Verification => {
            let h = hash(prompt);
            let verdict = match h % 10 {
                0 => "inconclusive",
                1 | 2 => "wrong",
                _ => "correct",
            };
            fenced(&json!({"correctness": verdict}))
        }
        PromptId::ExperienceInduction => {
            let correct = blocks(prompt, "Correct Example").len();
            let incorrect = blocks(prompt, "Incorrect Example").len();
            let mut suggestions = vec!["Match the answer to the wording of the question before choosing.".to_string()];
            if incorrect > 0 {
                suggestions.push(format!(
                    "Re-check the options that looked plausible; {incorrect} of {} practice answers were wrong.",
                    correct + incorrect
                ));
            }
            let procedure = vec![
                "Read the question and every option.".to_string(),
                "Eliminate options that contradict the question.".to_string(),
                "Report the remaining option in the requested JSON format.".to_string(),
            ];
            experience_reply(suggestions, procedure)
        }
        PromptId::ExperienceReasoning => {
            let question = prompt.rsplit_once(REFER_LINE).map_or(prompt, |(_, q)| q);
            answer(question, false)
        }
        PromptId::ExperienceGeneration => experience_reply(
            vec!["Read the whole question before answering.".to_string()],
            vec![
                "Identify what is being asked.".to_string(),
                "Pick the best option.".to_string(),
            ],
        ),
        PromptId::SelfIclGenerate => {
            let instance = between(prompt, "<Instance>\n", "\n</Instance>").unwrap_or("");
            (1..=3)
                .map(|i| format!("<New Instance {i}>\nVariant {i}. {instance}\n</New Instance {i}>"))
                .collect::<Vec<_>>()
                .join("\n")
        }
        PromptId::ZeroShot | PromptId::ZeroShotCot | PromptId::SelfIclLabel | PromptId::IclAnswer => {
            answer(prompt, id == PromptId::ZeroShotCot)
        }
    }
}

fn fenced(v: &serde_json::Value) -> String {
    format!("```json\n{}\n```", serde_json::to_string_pretty(v).expect("json value"))
}

fn experience_reply(mut suggestions: Vec<String>, mut procedure: Vec<String>) -> String {
    suggestions.truncate(MAX_INSIGHTS);
    procedure.truncate(MAX_INSIGHTS);
    fenced(&json!({SUGGESTIONS_HEADING: suggestions, PROCEDURE_HEADING: procedure}))
}

fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let end = text[start..].find(close)? + start;
    Some(&text[start..end])
}

fn blocks<'a>(prompt: &'a str, tag: &str) -> Vec<&'a str> {
    let mut out = Vec::new();
    for i in 1.. {
        match between(prompt, &format!("<{tag} {i}>\n"), &format!("\n</{tag} {i}>")) {
            Some(b) => out.push(b),
            None => break,
        }
    }
    out
}

fn candidates(prompt: &str) -> Vec<&str> {
    blocks(prompt, "Candidate Task")
}

fn words(text: &str) -> HashSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.len() > 2)
        .map(str::to_lowercase)
        .collect()
}

fn overlap(a: &HashSet<String>, b: &HashSet<String>) -> usize {
    a.intersection(b).count()
}

fn hash(text: &str) -> u64 {
    let d = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn dedup(items: Vec<String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    items.into_iter().filter(|s| seen.insert(s.clone())).collect()
}

/// Task type from the answer format: the answer key and the instruction line
/// that precedes the format block.
fn induce_task(question: &str) -> (String, String) {
    let key = answer_key(question).unwrap_or("answer");
    let instruction = question
        .lines()
        .take_while(|l| !l.starts_with("Use the following JSON format"))
        .filter(|l| !l.trim().is_empty())
        .last()
        .unwrap_or("")
        .trim();
    let name = match key {
        "correct option ID" => "Option selection",
        "correct choice ID" => "Choice selection",
        _ => "Answer selection",
    };
    let description = if instruction.is_empty() {
        format!("Select the right answer and report it as the {key}.")
    } else {
        format!("{instruction} The answer is reported as the {key}.")
    };
    (name.to_string(), description)
}

fn answer_key(question: &str) -> Option<&'static str> {
    ANSWER_KEYS.iter().copied().find(|k| question.contains(&format!("\"{k}\"")))
}

/// Labels listed in the format hint, e.g. `/* one of A, B */`.
fn hinted_labels(question: &str, key: &str) -> Vec<String> {
    let marker = format!("\"{key}\":");
    let Some(rest) = question.find(&marker).map(|i| &question[i + marker.len()..]) else {
        return Vec::new();
    };
    let Some(hint) = between(rest, "/*", "*/") else { return Vec::new() };
    hint.trim()
        .trim_start_matches("one of")
        .split([',', ' '])
        .map(|s| s.trim().trim_matches('"'))
        .filter(|s| !s.is_empty() && *s != "or")
        .map(str::to_string)
        .collect()
}

/// Option lines: `Option A: ...`, `Choice A: ...` or `"Yes": ...`.
fn option_text(question: &str, label: &str) -> Option<String> {
    let prefixes = [
        format!("Option {label}:"),
        format!("Choice {label}:"),
        format!("\"{label}\":"),
    ];
    question.lines().find_map(|l| {
        let l = l.trim();
        prefixes.iter().find_map(|p| l.strip_prefix(p.as_str()).map(|t| t.trim().to_string()))
    })
}

fn answer(question: &str, explain: bool) -> String {
    let key = answer_key(question).unwrap_or("answer");
    let labels = hinted_labels(question, key);
    let stem: HashSet<String> = words(
        &question
            .lines()
            .filter(|l| !l.starts_with("Option ") && !l.starts_with("Choice ") && !l.starts_with('"'))
            .collect::<Vec<_>>()
            .join(" "),
    );
    let mut best: Option<(&str, usize)> = None;
    for label in &labels {
        let score = option_text(question, label).map_or(0, |t| overlap(&stem, &words(&t)));
        if best.map_or(true, |(_, s)| score > s) {
            best = Some((label, score));
        }
    }
    let choice = best.map_or("A", |(l, _)| l);
    let body = fenced(&json!({ key: choice }));
    if explain {
        format!("The option sharing the most content with the question is {choice}.\n{body}")
    } else {
        body
    }
}

fn parse_json_list(line: &str) -> Vec<String> {
    serde_json::from_str::<Vec<String>>(line.trim().trim_end_matches(',')).unwrap_or_default()
}

fn parse_merge_block(prompt: &str) -> (Vec<String>, Vec<String>, Vec<String>) {
    let block = between(prompt, "<Existing Experience>\n", "\n</Existing Experience>").unwrap_or("");
    let mut lines = block.lines();
    let mut suggestions = Vec::new();
    let mut p1 = Vec::new();
    let mut p2 = Vec::new();
    while let Some(line) = lines.next() {
        if line.starts_with(&format!("\"{SUGGESTIONS_HEADING}\":")) {
            suggestions = parse_json_list(lines.next().unwrap_or(""));
        } else if let Some(rest) = line.strip_prefix("\"Task Processing Flow 1\":") {
            p1 = parse_json_list(rest);
        } else if let Some(rest) = line.strip_prefix("\"Task Processing Flow 2\":") {
            p2 = parse_json_list(rest);
        }
    }
    (suggestions, p1, p2)
}

/// Inverse of [`Experience::render_text`].
fn parse_experience_text(text: &str) -> (Vec<String>, Vec<String>) {
    let mut suggestions = Vec::new();
    let mut procedure = Vec::new();
    let mut in_procedure = false;
    for line in text.lines() {
        if line.starts_with(&format!("[{PROCEDURE_HEADING}]")) {
            in_procedure = true;
        } else if let Some(s) = line.strip_prefix("- ") {
            if !in_procedure {
                suggestions.push(s.to_string());
            }
        } else if let Some((n, s)) = line.split_once(". ") {
            if in_procedure && n.chars().all(|c| c.is_ascii_digit()) {
                procedure.push(s.to_string());
            }
        }
    }
    (suggestions, procedure)
}
