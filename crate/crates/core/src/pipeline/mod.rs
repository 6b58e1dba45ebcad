//! The learning agent: categorize, transfer, practice, induce, respond.

mod events;
mod practice;

pub use events::{
    check_grammar, parse_events, read_events, EventKind, EventLog, EventLogError, EventRecord, EVENT_SCHEMA_VERSION,
};
pub use practice::{
    PracticeExample, PracticeOutcome, PracticeSettings, Practicer, DEFAULT_PRACTICE_ATTEMPT_CAP,
    DEFAULT_PRACTICE_TARGET, DEFAULT_REFERENCE_DOCS,
};

use std::collections::HashSet;
use std::io;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::DocumentSource;
use crate::llm::extract::{ExperienceSchema, SelectedTaskIdSchema, SelectedTaskIdsSchema, TaskInductionSchema, Verdict};
use crate::llm::{prompt, Gateway, LlmError, UsageByPrompt, UsageLedger};
use crate::memory::{Experience, Memory, MemoryError, TaskId};
use crate::retrieval::{Embedder, Embedding, RetrievalError};

pub const DEFAULT_MATCH_CANDIDATES: usize = 5;
pub const DEFAULT_TRANSFER_CANDIDATES: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("event log: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Invalid(String),
}

/// A question as the agent sees it. Gold labels live with the harness and
/// never reach this type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserQuestion {
    pub question_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_tag: Option<String>,
}

impl UserQuestion {
    pub fn new(question_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            question_id: question_id.into(),
            text: text.into(),
            dataset_tag: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    pub match_candidates: usize,
    pub transfer_candidates: usize,
    pub practice: PracticeSettings,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            match_candidates: DEFAULT_MATCH_CANDIDATES,
            transfer_candidates: DEFAULT_TRANSFER_CANDIDATES,
            practice: PracticeSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Categorized {
    pub task_id: TaskId,
    pub is_new: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Answer {
    pub text: String,
    pub task_id: Option<TaskId>,
    pub is_new_task: bool,
    pub skipped_learning: bool,
    pub degraded: Option<String>,
}

struct Ctx {
    question_id: String,
    dataset: Option<String>,
    step: u64,
}

/// The experiential-learning agent. Questions must be handled in order; the
/// memory state seen by question `t` depends on every question before it.
pub struct Agent {
    gateway: Gateway,
    embedder: Arc<dyn Embedder>,
    corpus: Arc<dyn DocumentSource>,
    memory: Memory,
    settings: PipelineSettings,
    log: EventLog,
    next_step: u64,
    round: Option<u32>,
    usage_mark: UsageByPrompt,
}

impl Agent {
    pub fn new(
        gateway: Gateway,
        embedder: Arc<dyn Embedder>,
        corpus: Arc<dyn DocumentSource>,
        memory: Memory,
        settings: PipelineSettings,
        log: EventLog,
    ) -> Self {
        let usage_mark = gateway.usage().snapshot();
        Self {
            gateway,
            embedder,
            corpus,
            memory,
            settings,
            log,
            next_step: 0,
            round: None,
            usage_mark,
        }
    }

    pub fn memory(&self) -> &Memory {
        &self.memory
    }

    pub fn into_memory(self) -> Memory {
        self.memory
    }

    /// Swaps in `memory`, returning the old one. The event log and step
    /// counter carry on.
    pub fn replace_memory(&mut self, memory: Memory) -> Memory {
        std::mem::replace(&mut self.memory, memory)
    }

    pub fn events(&self) -> &[EventRecord] {
        self.log.records()
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn usage(&self) -> &Arc<UsageLedger> {
        self.gateway.usage()
    }

    /// Tags subsequent events with an evaluation round.
    pub fn set_round(&mut self, round: Option<u32>) {
        self.round = round;
    }

    fn ctx(&mut self, q: &UserQuestion) -> Ctx {
        let step = self.next_step;
        self.next_step += 1;
        Ctx {
            question_id: q.question_id.clone(),
            dataset: q.dataset_tag.clone(),
            step,
        }
    }

    fn emit(&mut self, ctx: &Ctx, kind: EventKind) -> Result<(), PipelineError> {
        let now = self.gateway.usage().snapshot();
        let usage = UsageLedger::delta(&self.usage_mark, &now);
        self.usage_mark = now;
        self.log.push(EventRecord {
            v: EVENT_SCHEMA_VERSION,
            seq: self.log.next_seq(),
            question_id: ctx.question_id.clone(),
            step: ctx.step,
            round: self.round,
            dataset: ctx.dataset.clone(),
            kind,
            usage,
        })?;
        Ok(())
    }

    fn embed(&self, text: &str) -> Result<Embedding, PipelineError> {
        Ok(self.embedder.embed(text)?)
    }

    /// Answers `question`, learning first unless its task is adequately
    /// learned. Model failures degrade the answer rather than abort it;
    /// only store and log failures are returned as errors.
    pub fn handle(&mut self, question: &UserQuestion) -> Result<Answer, PipelineError> {
        let ctx = self.ctx(question);
        let categorized = match self.categorize_in(&ctx, question) {
            Ok(c) => c,
            Err(PipelineError::Llm(e)) => return self.respond_untasked(&ctx, question, &e.to_string()),
            Err(PipelineError::Retrieval(e)) => return self.respond_untasked(&ctx, question, &e.to_string()),
            Err(e) => return Err(e),
        };
        let task_id = categorized.task_id;
        if self.memory.is_adequately_learned(task_id)? {
            let perfect_streak = self.memory.task(task_id)?.perfect_streak;
            self.emit(&ctx, EventKind::SkipLearning { task_id, perfect_streak })?;
            let exp = self.memory.task(task_id)?.experience.clone();
            let mut answer = self.respond_in(&ctx, question, Some(task_id), &exp, true)?;
            answer.is_new_task = categorized.is_new;
            return Ok(answer);
        }
        let transferred = self.transfer_in(&ctx, task_id)?;
        let outcome = self.practice_in(&ctx, question, task_id, &transferred)?;
        self.induce_in(&ctx, task_id, &outcome.examples, &transferred)?;
        let exp = self.memory.task(task_id)?.experience.clone();
        let mut answer = self.respond_in(&ctx, question, Some(task_id), &exp, false)?;
        answer.is_new_task = categorized.is_new;
        Ok(answer)
    }

    /// Links the question to a remembered task or creates a new one.
    pub fn categorize(&mut self, question: &UserQuestion) -> Result<Categorized, PipelineError> {
        let ctx = self.ctx(question);
        self.categorize_in(&ctx, question)
    }

    fn categorize_in(&mut self, ctx: &Ctx, question: &UserQuestion) -> Result<Categorized, PipelineError> {
        let draft = self
            .gateway
            .call_parsed(&prompt::task_induction(&question.text), &TaskInductionSchema)?;
        let embedding = self.embed(&draft.description)?;
        self.emit(
            ctx,
            EventKind::TaskGenerated {
                name: draft.name.clone(),
                description: draft.description.clone(),
            },
        )?;
        let hits = self
            .memory
            .index()
            .top_k(&embedding, self.settings.match_candidates, &HashSet::new())?;
        let mut low_confidence = false;
        let mut rejected_choice = None;
        let mut warning = None;
        if !hits.is_empty() {
            let descriptions: Vec<String> = hits
                .iter()
                .map(|h| self.memory.task(h.id).map(|t| t.description.clone()))
                .collect::<Result<_, _>>()?;
            match self
                .gateway
                .vote(&prompt::task_match(&draft.description, &descriptions), &SelectedTaskIdSchema)
            {
                Ok(vote) => {
                    low_confidence = vote.low_confidence;
                    match vote.value {
                        -1 => {}
                        n if n >= 1 && (n as usize) <= hits.len() => {
                            let task_id = hits[n as usize - 1].id;
                            self.emit(
                                ctx,
                                EventKind::TaskMatched {
                                    task_id,
                                    candidates: hits.len(),
                                    low_confidence,
                                },
                            )?;
                            return Ok(Categorized { task_id, is_new: false });
                        }
                        n => {
                            tracing::warn!(choice = n, "task matcher returned an id that was not presented");
                            rejected_choice = Some(n);
                        }
                    }
                }
                Err(e) => {
                    tracing::warn!(error = %e, "task matching failed; creating a new task");
                    warning = Some(e.to_string());
                }
            }
        }
        let task_id = self.memory.create_task(&draft.name, &draft.description, embedding)?;
        self.emit(
            ctx,
            EventKind::TaskCreated {
                task_id,
                candidates: hits.len(),
                rejected_choice,
                low_confidence,
                warning,
            },
        )?;
        Ok(Categorized { task_id, is_new: true })
    }

    /// Experience for `task_id` adapted from similar remembered tasks.
    pub fn transfer(&mut self, question: &UserQuestion, task_id: TaskId) -> Result<Experience, PipelineError> {
        let ctx = self.ctx(question);
        self.transfer_in(&ctx, task_id)
    }

    fn transfer_in(&mut self, ctx: &Ctx, task_id: TaskId) -> Result<Experience, PipelineError> {
        let task = self.memory.task(task_id)?.clone();
        let e_mem = task.experience.clone();
        let memory = &self.memory;
        let hits = memory.index().top_k_where(&task.description_embedding, self.settings.transfer_candidates, |id| {
            *id != task_id && memory.task(*id).is_ok_and(|t| !t.experience.is_empty())
        })?;
        let candidates: Vec<TaskId> = hits.iter().map(|h| h.id).collect();
        let mut selected = Vec::new();
        let mut ignored_ids = Vec::new();
        let mut degraded = None;
        if !candidates.is_empty() {
            let descriptions: Vec<String> = candidates
                .iter()
                .map(|id| self.memory.task(*id).map(|t| t.description.clone()))
                .collect::<Result<_, _>>()?;
            match self
                .gateway
                .call_parsed(&prompt::source_selection(&task.description, &descriptions), &SelectedTaskIdsSchema)
            {
                Ok(ids) => {
                    for n in ids {
                        match (n >= 1).then(|| candidates.get(n as usize - 1)).flatten() {
                            Some(id) if !selected.contains(id) => selected.push(*id),
                            Some(_) => {}
                            None => ignored_ids.push(n),
                        }
                    }
                }
                Err(e) => degraded = Some(format!("source selection: {e}")),
            }
        }
        self.emit(
            ctx,
            EventKind::SourcesSelected {
                task_id,
                candidates: candidates.clone(),
                selected: selected.clone(),
                ignored_ids,
            },
        )?;
        let mut merged = false;
        let mut result = e_mem.clone();
        if !selected.is_empty() {
            let sources: Vec<(String, Experience)> = selected
                .iter()
                .map(|id| self.memory.task(*id).map(|t| (t.description.clone(), t.experience.clone())))
                .collect::<Result<_, _>>()?;
            let refs: Vec<(&str, &Experience)> = sources.iter().map(|(d, e)| (d.as_str(), e)).collect();
            match self
                .gateway
                .call_parsed(&prompt::experience_transfer(&task.description, &refs), &ExperienceSchema)
            {
                Ok(transferred) if e_mem.is_empty() => result = transferred,
                Ok(transferred) => match self.gateway.call_parsed(
                    &prompt::experience_merge(&task.description, &transferred, &e_mem),
                    &ExperienceSchema,
                ) {
                    Ok(m) => {
                        result = m;
                        merged = true;
                    }
                    Err(e) => degraded = Some(format!("merge after transfer: {e}")),
                },
                Err(e) => degraded = Some(format!("experience transfer: {e}")),
            }
        }
        self.emit(
            ctx,
            EventKind::TransferDone {
                task_id,
                sources: selected.len(),
                merged,
                insights: result.insight_count(),
                degraded,
            },
        )?;
        Ok(result)
    }

    /// One practice round; the incorrect count is recorded when at least one
    /// example was kept.
    pub fn practice(
        &mut self,
        question: &UserQuestion,
        task_id: TaskId,
        experience: &Experience,
    ) -> Result<PracticeOutcome, PipelineError> {
        let ctx = self.ctx(question);
        self.practice_in(&ctx, question, task_id, experience)
    }

    fn practice_in(
        &mut self,
        ctx: &Ctx,
        question: &UserQuestion,
        task_id: TaskId,
        experience: &Experience,
    ) -> Result<PracticeOutcome, PipelineError> {
        let description = self.memory.task(task_id)?.description.clone();
        let outcome = Practicer {
            gateway: &self.gateway,
            corpus: self.corpus.as_ref(),
            settings: self.settings.practice,
        }
        .run(&question.text, &description, experience);
        if !outcome.examples.is_empty() {
            self.memory.record_practice_outcome(task_id, outcome.incorrect() as u32)?;
        }
        self.emit(
            ctx,
            EventKind::PracticeRound {
                task_id,
                kept: outcome.examples.len(),
                incorrect: outcome.incorrect(),
                discarded: outcome.discarded,
                failed: outcome.failed,
                attempts: outcome.attempts,
                documents: outcome.documents,
                low_confidence_votes: outcome.low_confidence_votes,
                degraded: outcome.degraded,
                questions: outcome.questions.clone(),
            },
        )?;
        Ok(outcome)
    }

    /// Summarizes practice into experience and stores it for the task.
    pub fn induce(
        &mut self,
        question: &UserQuestion,
        task_id: TaskId,
        examples: &[PracticeExample],
        transferred: &Experience,
    ) -> Result<Experience, PipelineError> {
        let ctx = self.ctx(question);
        self.induce_in(&ctx, task_id, examples, transferred)
    }

    fn induce_in(
        &mut self,
        ctx: &Ctx,
        task_id: TaskId,
        examples: &[PracticeExample],
        transferred: &Experience,
    ) -> Result<Experience, PipelineError> {
        let description = self.memory.task(task_id)?.description.clone();
        let mut merged = false;
        let mut fallback = None;
        let result = if examples.is_empty() {
            fallback = Some("no practice examples kept".to_string());
            transferred.clone()
        } else {
            let pairs = |v: Verdict| -> Vec<(&str, &str)> {
                examples
                    .iter()
                    .filter(|e| e.verdict == v)
                    .map(|e| (e.question.as_str(), e.reasoning.as_str()))
                    .collect()
            };
            let p9 = prompt::experience_induction(&pairs(Verdict::Correct), &pairs(Verdict::Wrong));
            match self.gateway.call_parsed(&p9, &ExperienceSchema) {
                Ok(induced) if transferred.is_empty() => induced,
                Ok(induced) => {
                    match self.gateway.call_parsed(
                        &prompt::experience_merge(&description, &induced, transferred),
                        &ExperienceSchema,
                    ) {
                        Ok(m) => {
                            merged = true;
                            m
                        }
                        Err(e) => {
                            fallback = Some(format!("merge after induction: {e}"));
                            induced
                        }
                    }
                }
                Err(e) => {
                    fallback = Some(format!("experience induction: {e}"));
                    transferred.clone()
                }
            }
        };
        self.memory.replace_experience(task_id, result.clone())?;
        self.emit(
            ctx,
            EventKind::InductionDone {
                task_id,
                insights: result.insight_count(),
                merged,
                fallback,
            },
        )?;
        Ok(result)
    }

    /// Answers with the given experience; no memory change.
    pub fn respond(
        &mut self,
        question: &UserQuestion,
        task_id: Option<TaskId>,
        experience: &Experience,
    ) -> Result<Answer, PipelineError> {
        let ctx = self.ctx(question);
        self.respond_in(&ctx, question, task_id, experience, false)
    }

    fn respond_in(
        &mut self,
        ctx: &Ctx,
        question: &UserQuestion,
        task_id: Option<TaskId>,
        experience: &Experience,
        skipped_learning: bool,
    ) -> Result<Answer, PipelineError> {
        self.respond_with(ctx, question, task_id, experience, skipped_learning, None)
    }

    fn respond_with(
        &mut self,
        ctx: &Ctx,
        question: &UserQuestion,
        task_id: Option<TaskId>,
        experience: &Experience,
        skipped_learning: bool,
        note: Option<String>,
    ) -> Result<Answer, PipelineError> {
        let (text, degraded) = match self
            .gateway
            .call(&prompt::experience_reasoning(experience, &question.text))
        {
            Ok(t) => (t, note),
            Err(e) => (String::new(), Some(format!("response: {e}"))),
        };
        self.emit(
            ctx,
            EventKind::Responded {
                task_id,
                skipped_learning,
                memory_tasks: self.memory.len(),
                memory_insights: self.memory.total_insights(),
                response: text.clone(),
                degraded: degraded.clone(),
            },
        )?;
        Ok(Answer {
            text,
            task_id,
            is_new_task: false,
            skipped_learning,
            degraded,
        })
    }

    fn respond_untasked(&mut self, ctx: &Ctx, question: &UserQuestion, reason: &str) -> Result<Answer, PipelineError> {
        tracing::warn!(reason, "categorization failed; answering without experience");
        let note = Some(format!("categorization: {reason}"));
        self.respond_with(ctx, question, None, &Experience::empty(), false, note)
    }

    /// Runs `rounds` practice-then-induce cycles on one task and returns the
    /// task's insight count after each.
    pub fn repeated_induction(
        &mut self,
        question: &UserQuestion,
        task_id: TaskId,
        rounds: usize,
    ) -> Result<Vec<usize>, PipelineError> {
        if rounds == 0 {
            return Err(PipelineError::Invalid("rounds must be at least 1".into()));
        }
        let mut counts = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let ctx = self.ctx(question);
            let current = self.memory.task(task_id)?.experience.clone();
            let outcome = self.practice_in(&ctx, question, task_id, &current)?;
            let exp = self.induce_in(&ctx, task_id, &outcome.examples, &current)?;
            counts.push(exp.insight_count());
        }
        Ok(counts)
    }
}
