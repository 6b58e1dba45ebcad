//! Run event log.
//!
//! JSON lines, one [`EventRecord`] per line. Every record carries
//! `"v": 1`; readers reject other versions. Per handled question the kinds
//! follow
//!
//! ```text
//! task_generated (task_matched | task_created)
//!     (skip_learning | sources_selected transfer_done practice_round+ induction_done)
//!     responded
//! ```
//!
//! A question whose task could not be induced at all is answered without
//! learning and logs only `responded` with `degraded` set.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::llm::UsageByPrompt;
use crate::memory::TaskId;

pub const EVENT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub v: u32,
    pub seq: u64,
    pub question_id: String,
    /// Operating round: position of the question in the processing order.
    pub step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(flatten)]
    pub kind: EventKind,
    /// Model usage accrued since the previous event.
    #[serde(default)]
    pub usage: UsageByPrompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    TaskGenerated {
        name: String,
        description: String,
    },
    TaskMatched {
        task_id: TaskId,
        candidates: usize,
        low_confidence: bool,
    },
    TaskCreated {
        task_id: TaskId,
        candidates: usize,
        /// Id returned by the matcher that was not a presented candidate.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rejected_choice: Option<i64>,
        low_confidence: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        warning: Option<String>,
    },
    SkipLearning {
        task_id: TaskId,
        perfect_streak: u32,
    },
    SourcesSelected {
        task_id: TaskId,
        candidates: Vec<TaskId>,
        selected: Vec<TaskId>,
        ignored_ids: Vec<i64>,
    },
    TransferDone {
        task_id: TaskId,
        sources: usize,
        merged: bool,
        insights: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        degraded: Option<String>,
    },
    PracticeRound {
        task_id: TaskId,
        kept: usize,
        incorrect: usize,
        discarded: usize,
        failed: usize,
        attempts: usize,
        documents: usize,
        low_confidence_votes: usize,
        degraded: bool,
        /// Generated practice questions, for diversity statistics.
        questions: Vec<String>,
    },
    InductionDone {
        task_id: TaskId,
        insights: usize,
        merged: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fallback: Option<String>,
    },
    Responded {
        task_id: Option<TaskId>,
        skipped_learning: bool,
        memory_tasks: usize,
        memory_insights: usize,
        response: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        degraded: Option<String>,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::TaskGenerated { .. } => "task_generated",
            EventKind::TaskMatched { .. } => "task_matched",
            EventKind::TaskCreated { .. } => "task_created",
            EventKind::SkipLearning { .. } => "skip_learning",
            EventKind::SourcesSelected { .. } => "sources_selected",
            EventKind::TransferDone { .. } => "transfer_done",
            EventKind::PracticeRound { .. } => "practice_round",
            EventKind::InductionDone { .. } => "induction_done",
            EventKind::Responded { .. } => "responded",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EventLogError {
    #[error("event log I/O: {0}")]
    Io(#[from] io::Error),
    #[error("event log line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("event log line {line}: unsupported schema version {version}")]
    Version { line: usize, version: u32 },
}

/// Append-only event sink, optionally mirrored to a JSON-lines file.
#[derive(Default)]
pub struct EventLog {
    records: Vec<EventRecord>,
    file: Option<BufWriter<File>>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn create(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            records: Vec::new(),
            file: Some(BufWriter::new(file)),
        })
    }

    pub fn next_seq(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn push(&mut self, record: EventRecord) -> io::Result<()> {
        if let Some(f) = self.file.as_mut() {
            serde_json::to_writer(&mut *f, &record).map_err(io::Error::other)?;
            f.write_all(b"\n")?;
            f.flush()?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }
}

pub fn parse_events(text: &str) -> Result<Vec<EventRecord>, EventLogError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(i + 1, line)?);
    }
    Ok(out)
}

pub fn read_events(path: &Path) -> Result<Vec<EventRecord>, EventLogError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(i + 1, &line)?);
    }
    Ok(out)
}

fn parse_line(line: usize, text: &str) -> Result<EventRecord, EventLogError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| EventLogError::Malformed {
        line,
        message: e.to_string(),
    })?;
    let version = value.get("v").and_then(serde_json::Value::as_u64).unwrap_or(0) as u32;
    if version != EVENT_SCHEMA_VERSION {
        return Err(EventLogError::Version { line, version });
    }
    serde_json::from_value(value).map_err(|e| EventLogError::Malformed {
        line,
        message: e.to_string(),
    })
}

/// Checks the per-question event grammar over a whole log. Questions are
/// keyed by `(round, question_id)`. Returns the offending question id and
/// its kind sequence on failure.
pub fn check_grammar(records: &[EventRecord]) -> Result<(), (String, String)> {
    let mut order: Vec<(Option<u32>, &str)> = Vec::new();
    let mut by_question: HashMap<(Option<u32>, &str), Vec<&'static str>> = HashMap::new();
    for r in records {
        let key = (r.round, r.question_id.as_str());
        by_question
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r.kind.name());
    }
    for key in order {
        let kinds = &by_question[&key];
        if !question_grammar(kinds) {
            return Err((key.1.to_string(), kinds.join(" ")));
        }
    }
    Ok(())
}

fn question_grammar(kinds: &[&str]) -> bool {
    let Some((&"responded", body)) = kinds.split_last() else {
        return false;
    };
    if body.is_empty() {
        return true;
    }
    if body.len() < 2 || body[0] != "task_generated" || !matches!(body[1], "task_matched" | "task_created") {
        return false;
    }
    match &body[2..] {
        ["skip_learning"] => true,
        [first, second, middle @ .., last] => {
            *first == "sources_selected"
                && *second == "transfer_done"
                && *last == "induction_done"
                && !middle.is_empty()
                && middle.iter().all(|k| *k == "practice_round")
        }
        _ => false,
    }
}
