//! Task-specific experience memory.
//!
//! Every mutation is recorded as a [`MemoryEvent`] and optionally appended to
//! a JSON-lines log, one event per line:
//!
//! ```text
//! {"seq":0,"kind":"task_created","payload":{"task_id":"1","name":"...","description":"...","embedding":[...]}}
//! {"seq":1,"kind":"practice_recorded","payload":{"task_id":"1","incorrect_count":0}}
//! {"seq":2,"kind":"experience_replaced","payload":{"task_id":"1","experience":{"suggestions":[...],"procedure":[...]}}}
//! ```
//!
//! Replaying the log from an empty memory reproduces the live state exactly.
//! A full snapshot can also be written as a single JSON document headed by
//! `{"format": "se-memory", "version": 1}`.

mod experience;

pub use experience::{Experience, ExperienceError, MAX_INSIGHTS, PROCEDURE_HEADING, SUGGESTIONS_HEADING};

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::retrieval::{Embedding, RetrievalError, VectorIndex};

pub const SNAPSHOT_FORMAT: &str = "se-memory";
pub const SNAPSHOT_VERSION: u32 = 1;
pub const DEFAULT_SKIP_THRESHOLD: u32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("task description must not be empty")]
    EmptyDescription,
    #[error("task {0} already exists; the store is corrupt")]
    DuplicateTask(TaskId),
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Experience(#[from] ExperienceError),
    #[error("event log line {line}: {message}")]
    Replay { line: usize, message: String },
    #[error("snapshot format error: {0}")]
    Format(String),
    #[error("unsupported snapshot {format:?} version {version}")]
    Version { format: String, version: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Memory-assigned task identifier, rendered as a decimal string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskId(u64);

impl TaskId {
    pub fn new(raw: u64) -> Self {
        Self(raw)
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for TaskId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim().parse().map(TaskId)
    }
}

impl Serialize for TaskId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TaskId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: TaskId,
    pub name: String,
    pub description: String,
    pub description_embedding: Embedding,
    pub experience: Experience,
    /// Incorrect-example count of each completed practice round, oldest first.
    pub practice_history: Vec<u32>,
    pub perfect_streak: u32,
    pub created_seq: u64,
}

/// Number of trailing zero entries in a practice history.
pub fn trailing_zero_rounds(history: &[u32]) -> u32 {
    history.iter().rev().take_while(|&&c| c == 0).count() as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEvent {
    pub seq: u64,
    #[serde(flatten)]
    pub change: MemoryChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum MemoryChange {
    TaskCreated {
        task_id: TaskId,
        name: String,
        description: String,
        embedding: Embedding,
    },
    ExperienceReplaced {
        task_id: TaskId,
        experience: Experience,
    },
    PracticeRecorded {
        task_id: TaskId,
        incorrect_count: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryConfig {
    pub dim: usize,
    pub skip_threshold: u32,
}

impl MemoryConfig {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            skip_threshold: DEFAULT_SKIP_THRESHOLD,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    config: MemoryConfig,
    next_seq: u64,
    next_task_id: u64,
    tasks: Vec<TaskRecord>,
}

/// The experience store. Single writer; share `&Memory` for reads.
pub struct Memory {
    config: MemoryConfig,
    tasks: BTreeMap<TaskId, TaskRecord>,
    index: VectorIndex<TaskId>,
    next_seq: u64,
    next_task_id: u64,
    journal: Vec<MemoryEvent>,
    sink: Option<File>,
}

impl fmt::Debug for Memory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Memory")
            .field("config", &self.config)
            .field("tasks", &self.tasks.len())
            .field("next_seq", &self.next_seq)
            .finish()
    }
}

/// State equality: task records, counters and configuration. The in-process
/// journal and any attached log file are not part of the state.
impl PartialEq for Memory {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.next_seq == other.next_seq
            && self.next_task_id == other.next_task_id
            && self.tasks == other.tasks
    }
}

impl Memory {
    pub fn new(config: MemoryConfig) -> Self {
        Self {
            config,
            tasks: BTreeMap::new(),
            index: VectorIndex::new(config.dim),
            next_seq: 0,
            next_task_id: 1,
            journal: Vec::new(),
            sink: None,
        }
    }

    /// Rebuilds a memory by applying `events` in order to an empty store.
    pub fn replay<'a, I>(config: MemoryConfig, events: I) -> Result<Self, MemoryError>
    where
        I: IntoIterator<Item = &'a MemoryEvent>,
    {
        let mut mem = Self::new(config);
        for (i, event) in events.into_iter().enumerate() {
            mem.apply_replayed(event.clone())
                .map_err(|e| MemoryError::Replay { line: i + 1, message: e.to_string() })?;
        }
        Ok(mem)
    }

    /// Opens (or creates) a JSON-lines event log, replays it, and appends
    /// every further mutation to it.
    pub fn open_log(path: &Path, config: MemoryConfig) -> Result<Self, MemoryError> {
        let mut mem = Self::new(config);
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let replay_err = |message: String| MemoryError::Replay { line: i + 1, message };
                let event: MemoryEvent = serde_json::from_str(&line).map_err(|e| replay_err(e.to_string()))?;
                mem.apply_replayed(event).map_err(|e| replay_err(e.to_string()))?;
            }
        }
        mem.sink = Some(OpenOptions::new().create(true).append(true).open(path)?);
        Ok(mem)
    }

    pub fn config(&self) -> MemoryConfig {
        self.config
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn task(&self, id: TaskId) -> Result<&TaskRecord, MemoryError> {
        self.tasks.get(&id).ok_or(MemoryError::UnknownTask(id))
    }

    pub fn tasks(&self) -> impl Iterator<Item = &TaskRecord> {
        self.tasks.values()
    }

    pub fn index(&self) -> &VectorIndex<TaskId> {
        &self.index
    }

    /// Events recorded by this instance, including replayed ones.
    pub fn events(&self) -> &[MemoryEvent] {
        &self.journal
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn total_insights(&self) -> usize {
        self.tasks.values().map(|t| t.experience.insight_count()).sum()
    }

    pub fn create_task(&mut self, name: &str, description: &str, embedding: Embedding) -> Result<TaskId, MemoryError> {
        let task_id = TaskId(self.next_task_id);
        self.commit(MemoryChange::TaskCreated {
            task_id,
            name: name.trim().to_string(),
            description: description.trim().to_string(),
            embedding,
        })?;
        Ok(task_id)
    }

    /// Replaces the stored experience of `task_id` wholesale.
    pub fn replace_experience(&mut self, task_id: TaskId, experience: Experience) -> Result<(), MemoryError> {
        self.commit(MemoryChange::ExperienceReplaced { task_id, experience })
    }

    pub fn record_practice_outcome(&mut self, task_id: TaskId, incorrect_count: u32) -> Result<(), MemoryError> {
        self.commit(MemoryChange::PracticeRecorded { task_id, incorrect_count })
    }

    /// True once the task's consecutive zero-error practice rounds reach the
    /// configured threshold.
    pub fn is_adequately_learned(&self, task_id: TaskId) -> Result<bool, MemoryError> {
        Ok(self.task(task_id)?.perfect_streak >= self.config.skip_threshold)
    }

    fn commit(&mut self, change: MemoryChange) -> Result<(), MemoryError> {
        self.check(&change)?;
        let event = MemoryEvent { seq: self.next_seq, change };
        if let Some(sink) = self.sink.as_mut() {
            let mut line = serde_json::to_string(&event).map_err(|e| MemoryError::Format(e.to_string()))?;
            line.push('\n');
            sink.write_all(line.as_bytes())?;
            sink.flush()?;
        }
        self.apply(event);
        Ok(())
    }

    fn apply_replayed(&mut self, event: MemoryEvent) -> Result<(), MemoryError> {
        if event.seq != self.next_seq {
            return Err(MemoryError::Format(format!(
                "expected seq {}, found {}",
                self.next_seq, event.seq
            )));
        }
        if let MemoryChange::TaskCreated { task_id, .. } = &event.change {
            if task_id.0 != self.next_task_id {
                return Err(MemoryError::Format(format!(
                    "expected task id {}, found {task_id}",
                    self.next_task_id
                )));
            }
        }
        self.check(&event.change)?;
        self.apply(event);
        Ok(())
    }

    fn check(&self, change: &MemoryChange) -> Result<(), MemoryError> {
        match change {
            MemoryChange::TaskCreated {
                task_id,
                description,
                embedding,
                ..
            } => {
                if description.trim().is_empty() {
                    return Err(MemoryError::EmptyDescription);
                }
                if embedding.dim() != self.config.dim {
                    return Err(MemoryError::DimensionMismatch {
                        expected: self.config.dim,
                        actual: embedding.dim(),
                    });
                }
                if self.tasks.contains_key(task_id) || self.index.contains(task_id) {
                    return Err(MemoryError::DuplicateTask(*task_id));
                }
            }
            MemoryChange::ExperienceReplaced { task_id, experience } => {
                self.task(*task_id)?;
                Experience::new(experience.suggestions().to_vec(), experience.procedure().to_vec())?;
            }
            MemoryChange::PracticeRecorded { task_id, .. } => {
                self.task(*task_id)?;
            }
        }
        Ok(())
    }

    /// Applies an already-checked event.
    fn apply(&mut self, event: MemoryEvent) {
        match &event.change {
            MemoryChange::TaskCreated {
                task_id,
                name,
                description,
                embedding,
            } => {
                self.index
                    .insert(*task_id, embedding.clone())
                    .expect("checked insert cannot fail");
                self.tasks.insert(
                    *task_id,
                    TaskRecord {
                        task_id: *task_id,
                        name: name.clone(),
                        description: description.clone(),
                        description_embedding: embedding.clone(),
                        experience: Experience::empty(),
                        practice_history: Vec::new(),
                        perfect_streak: 0,
                        created_seq: event.seq,
                    },
                );
                self.next_task_id = task_id.0 + 1;
            }
            MemoryChange::ExperienceReplaced { task_id, experience } => {
                if let Some(t) = self.tasks.get_mut(task_id) {
                    t.experience = experience.clone();
                }
            }
            MemoryChange::PracticeRecorded {
                task_id,
                incorrect_count,
            } => {
                if let Some(t) = self.tasks.get_mut(task_id) {
                    t.practice_history.push(*incorrect_count);
                    t.perfect_streak = if *incorrect_count == 0 { t.perfect_streak + 1 } else { 0 };
                }
            }
        }
        self.next_seq = event.seq + 1;
        self.journal.push(event);
    }

    /// Canonical JSON encoding of the full state.
    pub fn snapshot_string(&self) -> String {
        let snap = Snapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            config: self.config,
            next_seq: self.next_seq,
            next_task_id: self.next_task_id,
            tasks: self.tasks.values().cloned().collect(),
        };
        serde_json::to_string(&snap).expect("snapshot serialization is infallible")
    }

    pub fn snapshot(&self, path: &Path) -> Result<(), MemoryError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.snapshot_string())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load_snapshot(path: &Path) -> Result<Self, MemoryError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_snapshot_str(&text)
    }

    pub fn from_snapshot_str(text: &str) -> Result<Self, MemoryError> {
        let header: serde_json::Value = serde_json::from_str(text).map_err(|e| MemoryError::Format(e.to_string()))?;
        let format = header.get("format").and_then(|v| v.as_str()).unwrap_or_default();
        let version = header.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if format != SNAPSHOT_FORMAT || version != SNAPSHOT_VERSION {
            return Err(MemoryError::Version {
                format: format.to_string(),
                version,
            });
        }
        let snap: Snapshot = serde_json::from_value(header).map_err(|e| MemoryError::Format(e.to_string()))?;
        let mut mem = Self::new(snap.config);
        for task in snap.tasks {
            if task.description_embedding.dim() != snap.config.dim {
                return Err(MemoryError::Format(format!("task {} has wrong embedding dimension", task.task_id)));
            }
            if task.perfect_streak != trailing_zero_rounds(&task.practice_history) {
                return Err(MemoryError::Format(format!("task {} streak disagrees with history", task.task_id)));
            }
            if task.task_id.0 >= snap.next_task_id || task.created_seq >= snap.next_seq {
                return Err(MemoryError::Format(format!("task {} is ahead of the counters", task.task_id)));
            }
            mem.index
                .insert(task.task_id, task.description_embedding.clone())
                .map_err(|e| match e {
                    RetrievalError::DuplicateId => MemoryError::DuplicateTask(task.task_id),
                    other => MemoryError::Format(other.to_string()),
                })?;
            mem.tasks.insert(task.task_id, task);
        }
        mem.next_seq = snap.next_seq;
        mem.next_task_id = snap.next_task_id;
        Ok(mem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(x: f64) -> Embedding {
        Embedding::new(vec![x, 1.0, -x])
    }

    fn mem() -> Memory {
        Memory::new(MemoryConfig::new(3))
    }

    #[test]
    fn create_task_starts_empty() {
        let mut m = mem();
        let id = m.create_task("Fill-in-blank choice", "Pick the option that fits the blank", emb(1.0)).unwrap();
        assert_eq!(m.len(), 1);
        let t = m.task(id).unwrap();
        assert!(t.experience.is_empty());
        assert!(t.practice_history.is_empty());
        assert_eq!(t.perfect_streak, 0);
        assert!(m.index().contains(&id));
    }

    #[test]
    fn identical_descriptions_get_distinct_ids() {
        let mut m = mem();
        let a = m.create_task("t", "same", emb(1.0)).unwrap();
        let b = m.create_task("t", "same", emb(1.0)).unwrap();
        assert_ne!(a, b);
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn create_task_preconditions() {
        let mut m = mem();
        assert!(matches!(m.create_task("t", "", emb(1.0)), Err(MemoryError::EmptyDescription)));
        assert!(matches!(
            m.create_task("t", "d", Embedding::new(vec![1.0])),
            Err(MemoryError::DimensionMismatch { expected: 3, actual: 1 })
        ));
        assert!(m.is_empty());
        assert_eq!(m.next_seq(), 0);
    }

    #[test]
    fn replace_experience_semantics() {
        let mut m = mem();
        let id = m.create_task("t", "d", emb(1.0)).unwrap();
        let first = Experience::new(vec!["a".into()], vec![]).unwrap();
        let second = Experience::new(vec![], vec!["b".into()]).unwrap();
        m.replace_experience(id, first).unwrap();
        m.replace_experience(id, second.clone()).unwrap();
        assert_eq!(m.task(id).unwrap().experience, second);
        m.replace_experience(id, Experience::empty()).unwrap();
        assert!(m.task(id).unwrap().experience.is_empty());
        assert!(matches!(
            m.replace_experience(TaskId(99), Experience::empty()),
            Err(MemoryError::UnknownTask(_))
        ));
    }

    #[test]
    fn streak_counts_consecutive_zero_rounds() {
        let mut m = mem();
        let id = m.create_task("t", "d", emb(1.0)).unwrap();
        for _ in 0..3 {
            m.record_practice_outcome(id, 0).unwrap();
        }
        assert_eq!(m.task(id).unwrap().perfect_streak, 3);
        assert!(m.is_adequately_learned(id).unwrap());

        let id2 = m.create_task("t", "d2", emb(2.0)).unwrap();
        m.record_practice_outcome(id2, 0).unwrap();
        m.record_practice_outcome(id2, 0).unwrap();
        assert!(!m.is_adequately_learned(id2).unwrap());
        m.record_practice_outcome(id2, 2).unwrap();
        assert_eq!(m.task(id2).unwrap().perfect_streak, 0);
        assert!(!m.is_adequately_learned(id2).unwrap());
    }

    #[test]
    fn streak_matches_suffix_scan() {
        let history = [0, 2, 0, 0, 0];
        let mut m = mem();
        let id = m.create_task("t", "d", emb(1.0)).unwrap();
        for c in history {
            m.record_practice_outcome(id, c).unwrap();
        }
        let oracle = history.iter().rev().take_while(|c| **c == 0).count() as u32;
        assert_eq!(oracle, 3);
        assert_eq!(m.task(id).unwrap().perfect_streak, oracle);
    }

    #[test]
    fn threshold_is_configurable() {
        let mut m = Memory::new(MemoryConfig { dim: 3, skip_threshold: 1 });
        let id = m.create_task("t", "d", emb(1.0)).unwrap();
        assert!(!m.is_adequately_learned(id).unwrap());
        m.record_practice_outcome(id, 0).unwrap();
        assert!(m.is_adequately_learned(id).unwrap());
        assert!(matches!(m.is_adequately_learned(TaskId(5)), Err(MemoryError::UnknownTask(_))));
    }

    #[test]
    fn event_wire_format() {
        let mut m = mem();
        let id = m.create_task("n", "d", emb(0.5)).unwrap();
        m.record_practice_outcome(id, 1).unwrap();
        let line = serde_json::to_value(&m.events()[1]).unwrap();
        assert_eq!(
            line,
            serde_json::json!({"seq": 1, "kind": "practice_recorded", "payload": {"task_id": "1", "incorrect_count": 1}})
        );
        let back: MemoryEvent = serde_json::from_value(line).unwrap();
        assert_eq!(back, m.events()[1]);
    }

    #[test]
    fn replay_rejects_out_of_order_events() {
        let mut m = mem();
        let id = m.create_task("n", "d", emb(0.5)).unwrap();
        m.record_practice_outcome(id, 1).unwrap();
        let mut events = m.events().to_vec();
        events.swap(0, 1);
        assert!(matches!(
            Memory::replay(m.config(), &events),
            Err(MemoryError::Replay { line: 1, .. })
        ));
    }

    #[test]
    fn snapshot_rejects_bad_header_and_truncation() {
        let mut m = mem();
        m.create_task("n", "d", emb(0.5)).unwrap();
        let text = m.snapshot_string();
        let truncated = &text[..text.len() / 2];
        assert!(matches!(Memory::from_snapshot_str(truncated), Err(MemoryError::Format(_))));
        let wrong = text.replace("\"version\":1", "\"version\":2");
        assert!(matches!(Memory::from_snapshot_str(&wrong), Err(MemoryError::Version { version: 2, .. })));
        let back = Memory::from_snapshot_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn open_log_appends_and_replays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("memory.jsonl");
        let cfg = MemoryConfig::new(3);
        let id = {
            let mut m = Memory::open_log(&path, cfg).unwrap();
            let id = m.create_task("n", "d", emb(0.5)).unwrap();
            m.replace_experience(id, Experience::new(vec!["x".into()], vec![]).unwrap()).unwrap();
            id
        };
        let mut again = Memory::open_log(&path, cfg).unwrap();
        assert_eq!(again.task(id).unwrap().experience.suggestions(), ["x"]);
        again.record_practice_outcome(id, 0).unwrap();
        let third = Memory::open_log(&path, cfg).unwrap();
        assert_eq!(third, again);
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 3);
    }
}
