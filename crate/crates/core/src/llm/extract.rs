//! Structured-output extraction from free-form model text.
//!
//! Candidates are tried in order: fenced code blocks first, then every
//! brace-balanced substring of the whole reply. The first candidate that
//! parses as JSON and validates against the schema wins. `/* ... */`
//! comments copied from the format instructions are tolerated.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::memory::{Experience, PROCEDURE_HEADING, SUGGESTIONS_HEADING};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("no JSON object found in model output")]
    NoJson,
    #[error("JSON does not match the {schema} schema: {message}")]
    Schema { schema: &'static str, message: String },
}

pub trait OutputSchema {
    type Output;
    fn name(&self) -> &'static str;
    fn validate(&self, value: &Value) -> Result<Self::Output, String>;
}

pub fn extract_json<S: OutputSchema>(raw: &str, schema: &S) -> Result<S::Output, ExtractError> {
    let mut schema_error = None;
    for candidate in candidates(raw) {
        let Some(value) = parse_lenient(&candidate) else { continue };
        match schema.validate(&value) {
            Ok(out) => return Ok(out),
            Err(message) => {
                schema_error.get_or_insert(message);
            }
        }
    }
    Err(match schema_error {
        Some(message) => ExtractError::Schema {
            schema: schema.name(),
            message,
        },
        None => ExtractError::NoJson,
    })
}

/// Text between `<tag>` and `</tag>`, trimmed; `None` when absent or blank.
pub fn extract_tagged(raw: &str, tag: &str) -> Option<String> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = raw.find(&open)? + open.len();
    let end = raw[start..].find(&close)? + start;
    let inner = raw[start..end].trim();
    (!inner.is_empty()).then(|| inner.to_string())
}

fn fence_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)```[A-Za-z0-9_-]*[ \t]*\n?(.*?)```").unwrap())
}

fn candidates(raw: &str) -> Vec<String> {
    let mut out = Vec::new();
    for cap in fence_re().captures_iter(raw) {
        let body = cap[1].trim();
        out.push(body.to_string());
        out.extend(balanced_objects(body));
    }
    out.extend(balanced_objects(raw));
    out
}

/// Every `{...}` substring whose braces balance, honouring JSON strings.
fn balanced_objects(text: &str) -> Vec<String> {
    let bytes = text.as_bytes();
    let mut found = Vec::new();
    for (start, _) in text.match_indices('{') {
        let mut depth = 0usize;
        let mut in_str = false;
        let mut escaped = false;
        for (off, &b) in bytes[start..].iter().enumerate() {
            if in_str {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        found.push(text[start..=start + off].to_string());
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    found
}

fn parse_lenient(candidate: &str) -> Option<Value> {
    if let Ok(v) = serde_json::from_str::<Value>(candidate) {
        return Some(v);
    }
    let stripped = strip_block_comments(candidate);
    serde_json::from_str::<Value>(&stripped).ok()
}

fn strip_block_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    let mut in_str = false;
    let mut escaped = false;
    while let Some(c) = chars.next() {
        if in_str {
            out.push(c);
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        if c == '/' && chars.peek() == Some(&'*') {
            chars.next();
            let mut prev = '\0';
            for d in chars.by_ref() {
                if prev == '*' && d == '/' {
                    break;
                }
                prev = d;
            }
            continue;
        }
        if c == '"' {
            in_str = true;
        }
        out.push(c);
    }
    out
}

fn field<'a>(value: &'a Value, keys: &[&str]) -> Option<&'a Value> {
    let obj = value.as_object()?;
    keys.iter().find_map(|k| {
        obj.get(*k)
            .or_else(|| obj.iter().find(|(name, _)| name.trim().eq_ignore_ascii_case(k)).map(|(_, v)| v))
    })
}

fn as_int(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n
            .as_i64()
            .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64)),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Task name and description produced by task-type induction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDraft {
    pub name: String,
    pub description: String,
}

pub struct TaskInductionSchema;

impl OutputSchema for TaskInductionSchema {
    type Output = TaskDraft;

    fn name(&self) -> &'static str {
        "task induction"
    }

    fn validate(&self, value: &Value) -> Result<TaskDraft, String> {
        let get = |key: &str| {
            field(value, &[key])
                .and_then(Value::as_str)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .ok_or_else(|| format!("missing non-empty string `{key}`"))
        };
        Ok(TaskDraft {
            name: get("task name")?,
            description: get("task description")?,
        })
    }
}

pub struct SelectedTaskIdSchema;

impl OutputSchema for SelectedTaskIdSchema {
    type Output = i64;

    fn name(&self) -> &'static str {
        "selected task id"
    }

    fn validate(&self, value: &Value) -> Result<i64, String> {
        field(value, &["selected task id"])
            .and_then(as_int)
            .ok_or_else(|| "`selected task id` must be an integer".into())
    }
}

pub struct SelectedTaskIdsSchema;

impl OutputSchema for SelectedTaskIdsSchema {
    type Output = Vec<i64>;

    fn name(&self) -> &'static str {
        "selected task ids"
    }

    fn validate(&self, value: &Value) -> Result<Vec<i64>, String> {
        let items = field(value, &["selected task ids"])
            .and_then(Value::as_array)
            .ok_or("`selected task ids` must be a list")?;
        items
            .iter()
            .map(|v| as_int(v).ok_or_else(|| format!("non-integer id {v}")))
            .collect()
    }
}

/// Experience object with the two bounded lists; entries are trimmed and
/// each list is cut to its first twenty items.
pub struct ExperienceSchema;

impl OutputSchema for ExperienceSchema {
    type Output = Experience;

    fn name(&self) -> &'static str {
        "experience"
    }

    fn validate(&self, value: &Value) -> Result<Experience, String> {
        let list = |keys: &[&str]| -> Result<Option<Vec<String>>, String> {
            match field(value, keys) {
                None | Some(Value::Null) => Ok(None),
                Some(Value::Array(items)) => items
                    .iter()
                    .map(|v| match v {
                        Value::String(s) => Ok(s.clone()),
                        other => Err(format!("experience entry is not a string: {other}")),
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map(Some),
                Some(other) => Err(format!("experience list is not an array: {other}")),
            }
        };
        let suggestions = list(&[SUGGESTIONS_HEADING, "suggestions"])?;
        let procedure = list(&[PROCEDURE_HEADING, "procedure"])?;
        if suggestions.is_none() && procedure.is_none() {
            return Err("neither experience list is present".into());
        }
        Ok(Experience::bounded(
            suggestions.unwrap_or_default(),
            procedure.unwrap_or_default(),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Wrong,
    Inconclusive,
}

pub struct VerdictSchema;

impl OutputSchema for VerdictSchema {
    type Output = Verdict;

    fn name(&self) -> &'static str {
        "correctness verdict"
    }

    fn validate(&self, value: &Value) -> Result<Verdict, String> {
        let raw = field(value, &["correctness"])
            .and_then(Value::as_str)
            .ok_or("`correctness` must be a string")?;
        match raw.trim().trim_matches('"').to_ascii_lowercase().as_str() {
            "correct" => Ok(Verdict::Correct),
            "wrong" => Ok(Verdict::Wrong),
            "inconclusive" => Ok(Verdict::Inconclusive),
            other => Err(format!("verdict {other:?} is not one of correct/wrong/inconclusive")),
        }
    }
}

/// Answer label under one of the accepted keys (e.g. `correct option ID`).
pub struct OptionAnswerSchema {
    pub keys: Vec<String>,
}

impl OptionAnswerSchema {
    pub fn new<I, S>(keys: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            keys: keys.into_iter().map(Into::into).collect(),
        }
    }
}

impl OutputSchema for OptionAnswerSchema {
    type Output = String;

    fn name(&self) -> &'static str {
        "option answer"
    }

    fn validate(&self, value: &Value) -> Result<String, String> {
        let keys: Vec<&str> = self.keys.iter().map(String::as_str).collect();
        let answer = match field(value, &keys) {
            Some(Value::String(s)) => s.trim().to_string(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(format!("no answer under {:?}", self.keys)),
        };
        if answer.is_empty() {
            return Err("answer is empty".into());
        }
        Ok(answer)
    }
}
