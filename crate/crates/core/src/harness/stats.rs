//! Run statistics recomputed from the event log alone.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Tokenizer;
use crate::llm::{merge_usage, PromptId, TokenUsage, UsageByPrompt};
use crate::pipeline::{read_events, EventKind, EventLogError, EventRecord};

pub const DEFAULT_WINDOW: usize = 500;

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("no events")]
    NoEvents,
    #[error("window size must be positive")]
    ZeroWindow,
    #[error("n must be at least 1")]
    ZeroN,
    #[error("no {n}-grams in the corpus")]
    NoNgrams { n: usize },
    #[error(transparent)]
    Log(#[from] EventLogError),
}

/// Ratio of distinct n-grams to n-gram occurrences over all `texts`.
/// N-grams do not span text boundaries.
pub fn distinct_n<S: AsRef<str>>(texts: &[S], n: usize, tokenizer: &dyn Tokenizer) -> Result<f64, StatsError> {
    if n == 0 {
        return Err(StatsError::ZeroN);
    }
    let mut seen: HashSet<Vec<&str>> = HashSet::new();
    let mut total = 0usize;
    for text in texts {
        let text = text.as_ref();
        let tokens: Vec<&str> = tokenizer.spans(text).into_iter().map(|(a, b)| &text[a..b]).collect();
        for gram in tokens.windows(n) {
            total += 1;
            seen.insert(gram.to_vec());
        }
    }
    if total == 0 {
        return Err(StatsError::NoNgrams { n });
    }
    Ok(seen.len() as f64 / total as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub matched: usize,
    pub created: usize,
    pub skipped: usize,
    pub responded: usize,
}

impl CategoryCounts {
    pub fn matched_pct(&self) -> f64 {
        pct(self.matched, self.matched + self.created)
    }

    pub fn created_pct(&self) -> f64 {
        pct(self.created, self.matched + self.created)
    }

    pub fn skipped_pct(&self) -> f64 {
        pct(self.skipped, self.responded)
    }
}

/// Source-task counts over one window of operating rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceWindow {
    /// First operating round in the window (inclusive).
    pub start: u64,
    /// End of the window (exclusive).
    pub end: u64,
    /// Questions in the window that went through transfer.
    pub questions: usize,
    pub sources: usize,
    /// `None` when no question in the window transferred.
    pub average: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryPoint {
    pub step: u64,
    pub tasks: usize,
    pub insights: usize,
}

/// Token cost of one template averaged over the questions that invoked it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateCost {
    pub questions: usize,
    pub total: TokenUsage,
    pub avg_calls: f64,
    pub avg_input_tokens: f64,
    pub avg_output_tokens: f64,
    pub avg_total_tokens: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub window: usize,
    pub totals: CategoryCounts,
    pub matched_pct: f64,
    pub created_pct: f64,
    pub skipped_pct: f64,
    pub per_dataset: BTreeMap<String, CategoryCounts>,
    pub source_windows: Vec<SourceWindow>,
    pub memory_growth: Vec<MemoryPoint>,
    pub practice_questions: usize,
    pub dist1: Option<f64>,
    pub dist2: Option<f64>,
    pub token_usage: BTreeMap<PromptId, TemplateCost>,
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

type QuestionKey<'a> = (Option<u32>, &'a str);

/// Aggregates a pipeline event log.
///
/// Percentages are in 0..=100 and are 0 when their denominator is empty.
/// Source windows bucket questions by operating round (`step`) into
/// `ceil(rounds / window)` windows; questions that skipped learning or never
/// reached transfer do not count. Diversity is measured over every generated
/// practice question.
pub fn compute_stats(records: &[EventRecord], window: usize, tokenizer: &dyn Tokenizer) -> Result<RunStats, StatsError> {
    if records.is_empty() {
        return Err(StatsError::NoEvents);
    }
    if window == 0 {
        return Err(StatsError::ZeroWindow);
    }
    let mut totals = CategoryCounts::default();
    let mut per_dataset: BTreeMap<String, CategoryCounts> = BTreeMap::new();
    let mut transfers: Vec<(u64, usize)> = Vec::new();
    let mut memory_growth = Vec::new();
    let mut practice_questions: Vec<&str> = Vec::new();
    let mut usage: HashMap<QuestionKey<'_>, UsageByPrompt> = HashMap::new();
    let mut max_step = 0u64;

    for r in records {
        max_step = max_step.max(r.step);
        merge_usage(usage.entry((r.round, r.question_id.as_str())).or_default(), &r.usage);
        let ds = per_dataset.entry(r.dataset.clone().unwrap_or_default()).or_default();
        match &r.kind {
            EventKind::TaskMatched { .. } => {
                totals.matched += 1;
                ds.matched += 1;
            }
            EventKind::TaskCreated { .. } => {
                totals.created += 1;
                ds.created += 1;
            }
            EventKind::SkipLearning { .. } => {
                totals.skipped += 1;
                ds.skipped += 1;
            }
            EventKind::TransferDone { sources, .. } => transfers.push((r.step, *sources)),
            EventKind::PracticeRound { questions, .. } => {
                practice_questions.extend(questions.iter().map(String::as_str));
            }
            EventKind::Responded {
                memory_tasks,
                memory_insights,
                ..
            } => {
                totals.responded += 1;
                ds.responded += 1;
                memory_growth.push(MemoryPoint {
                    step: r.step,
                    tasks: *memory_tasks,
                    insights: *memory_insights,
                });
            }
            EventKind::TaskGenerated { .. }
            | EventKind::SourcesSelected { .. }
            | EventKind::InductionDone { .. } => {}
        }
    }
    if per_dataset.len() == 1 && per_dataset.contains_key("") {
        per_dataset.clear();
    }

    let buckets = (max_step as usize + 1).div_ceil(window);
    let mut source_windows: Vec<SourceWindow> = (0..buckets)
        .map(|b| SourceWindow {
            start: (b * window) as u64,
            end: ((b + 1) * window) as u64,
            questions: 0,
            sources: 0,
            average: None,
        })
        .collect();
    for (step, sources) in transfers {
        let w = &mut source_windows[step as usize / window];
        w.questions += 1;
        w.sources += sources;
    }
    for w in &mut source_windows {
        w.average = (w.questions > 0).then(|| w.sources as f64 / w.questions as f64);
    }

    let mut token_usage: BTreeMap<PromptId, TemplateCost> = BTreeMap::new();
    let mut per_template: BTreeMap<PromptId, (usize, TokenUsage)> = BTreeMap::new();
    for by_prompt in usage.values() {
        for (id, u) in by_prompt {
            if u.calls == 0 && u.attempts == 0 && u.total_tokens() == 0 {
                continue;
            }
            let e = per_template.entry(*id).or_default();
            e.0 += 1;
            e.1.add(u);
        }
    }
    for (id, (questions, total)) in per_template {
        let q = questions as f64;
        token_usage.insert(
            id,
            TemplateCost {
                questions,
                total,
                avg_calls: total.calls as f64 / q,
                avg_input_tokens: total.input_tokens as f64 / q,
                avg_output_tokens: total.output_tokens as f64 / q,
                avg_total_tokens: total.total_tokens() as f64 / q,
            },
        );
    }

    Ok(RunStats {
        window,
        matched_pct: totals.matched_pct(),
        created_pct: totals.created_pct(),
        skipped_pct: totals.skipped_pct(),
        totals,
        per_dataset,
        source_windows,
        memory_growth,
        practice_questions: practice_questions.len(),
        dist1: distinct_n(&practice_questions, 1, tokenizer).ok(),
        dist2: distinct_n(&practice_questions, 2, tokenizer).ok(),
        token_usage,
    })
}

pub fn compute_stats_from_path(path: &Path, window: usize, tokenizer: &dyn Tokenizer) -> Result<RunStats, StatsError> {
    compute_stats(&read_events(path)?, window, tokenizer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::WordPunctTokenizer;
    use crate::memory::TaskId;
    use crate::pipeline::EVENT_SCHEMA_VERSION;

    #[test]
    fn distinct_n_hand_counts() {
        let t = &WordPunctTokenizer;
        assert_eq!(distinct_n(&["a b", "a b"], 1, t).unwrap(), 0.5);
        assert_eq!(distinct_n(&["a a a"], 2, t).unwrap(), 0.5);
        assert_eq!(distinct_n(&["x y z w"], 1, t).unwrap(), 1.0);
        assert!(matches!(distinct_n::<&str>(&[], 1, t), Err(StatsError::NoNgrams { n: 1 })));
        assert!(matches!(distinct_n(&["a"], 2, t), Err(StatsError::NoNgrams { n: 2 })));
        assert!(matches!(distinct_n(&["a"], 0, t), Err(StatsError::ZeroN)));
    }

    fn ev(step: u64, qid: &str, kind: EventKind) -> EventRecord {
        EventRecord {
            v: EVENT_SCHEMA_VERSION,
            seq: 0,
            question_id: qid.into(),
            step,
            round: None,
            dataset: None,
            kind,
            usage: Default::default(),
        }
    }

    fn responded(step: u64, qid: &str) -> EventRecord {
        ev(
            step,
            qid,
            EventKind::Responded {
                task_id: None,
                skipped_learning: false,
                memory_tasks: 1,
                memory_insights: 2,
                response: String::new(),
                degraded: None,
            },
        )
    }

    #[test]
    fn matched_share_and_empty_logs() {
        let t = TaskId::new(0);
        let mut log = Vec::new();
        for i in 0..4u64 {
            let qid = format!("q{i}");
            let kind = if i < 3 {
                EventKind::TaskMatched {
                    task_id: t,
                    candidates: 1,
                    low_confidence: false,
                }
            } else {
                EventKind::TaskCreated {
                    task_id: t,
                    candidates: 0,
                    rejected_choice: None,
                    low_confidence: false,
                    warning: None,
                }
            };
            log.push(ev(i, &qid, kind));
            log.push(responded(i, &qid));
        }
        let s = compute_stats(&log, 500, &WordPunctTokenizer).unwrap();
        assert_eq!(s.matched_pct, 75.0);
        assert_eq!(s.matched_pct + s.created_pct, 100.0);
        assert_eq!(s.skipped_pct, 0.0);
        assert_eq!(s.dist1, None);
        assert!(matches!(compute_stats(&[], 500, &WordPunctTokenizer), Err(StatsError::NoEvents)));
    }

    #[test]
    fn windows_skip_questions_without_transfer() {
        let t = TaskId::new(0);
        let mut log = Vec::new();
        for step in 0..7u64 {
            let qid = format!("q{step}");
            if step % 2 == 0 {
                log.push(ev(
                    step,
                    &qid,
                    EventKind::TransferDone {
                        task_id: t,
                        sources: step as usize,
                        merged: false,
                        insights: 0,
                        degraded: None,
                    },
                ));
            } else {
                log.push(ev(step, &qid, EventKind::SkipLearning { task_id: t, perfect_streak: 3 }));
            }
            log.push(responded(step, &qid));
        }
        let s = compute_stats(&log, 3, &WordPunctTokenizer).unwrap();
        assert_eq!(s.source_windows.len(), 3);
        let avgs: Vec<_> = s.source_windows.iter().map(|w| w.average).collect();
        assert_eq!(avgs, [Some(1.0), Some(4.0), Some(6.0)]);
        assert_eq!(compute_stats(&log, 2, &WordPunctTokenizer).unwrap().source_windows.len(), 4);
        assert_eq!(compute_stats(&log, 7, &WordPunctTokenizer).unwrap().source_windows.len(), 1);
    }
}
