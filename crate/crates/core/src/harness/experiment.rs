use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledQuestion;
use super::methods::{
    modified_self_icl, BaselineTrace, Baselines, Method, PseudoLabels, DEFAULT_DEMONSTRATIONS, DEFAULT_NEIGHBOURS,
};
use super::stats::{compute_stats, RunStats, DEFAULT_WINDOW};
use super::HarnessError;
use crate::corpus::{DocumentSource, Tokenizer};
use crate::llm::extract::OptionAnswerSchema;
use crate::llm::{extract_json, Gateway, UsageByPrompt, UsageLedger};
use crate::memory::{Memory, MemoryConfig};
use crate::pipeline::{Agent, EventLog, EventRecord, PipelineSettings};
use crate::retrieval::{Embedder, VectorIndex};

pub const DEFAULT_ROUNDS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub rounds: u32,
    /// Worker threads for methods without cross-question state.
    pub parallelism: usize,
    /// Start each round with an empty memory instead of keeping it.
    pub reset_memory: bool,
    pub demonstrations: usize,
    pub neighbours: usize,
    pub window: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            rounds: DEFAULT_ROUNDS,
            parallelism: 1,
            reset_memory: false,
            demonstrations: DEFAULT_DEMONSTRATIONS,
            neighbours: DEFAULT_NEIGHBOURS,
            window: DEFAULT_WINDOW,
        }
    }
}

/// Everything a method may touch.
pub struct Resources {
    pub gateway: Gateway,
    pub embedder: Arc<dyn Embedder>,
    pub corpus: Arc<dyn DocumentSource>,
    pub tokenizer: Arc<dyn Tokenizer>,
    pub pipeline: PipelineSettings,
    pub memory: MemoryConfig,
    /// Where the agent's event log goes; kept in memory only when `None`.
    pub event_log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub round: u32,
    pub question_id: String,
    pub dataset: String,
    pub predicted: Option<String>,
    pub gold_label: String,
    pub correct: bool,
    /// Why no label could be scored, if none was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetScore {
    pub correct: usize,
    pub total: usize,
}

impl DatasetScore {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub round: u32,
    pub datasets: BTreeMap<String, DatasetScore>,
    /// Mean of the per-dataset accuracies.
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Answers with no extractable option label.
    pub unparseable: usize,
    /// Questions the method failed to answer at all.
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub rounds: Vec<RoundResult>,
    /// Per-dataset accuracy averaged over rounds.
    pub dataset_accuracy: BTreeMap<String, f64>,
    /// Mean of the round accuracies.
    pub average: f64,
    pub diagnostics: Diagnostics,
    pub usage: UsageByPrompt,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<RunStats>,
}

pub struct ExperimentOutput {
    pub result: MethodResult,
    pub predictions: Vec<Prediction>,
    pub traces: Vec<(u32, String, BaselineTrace)>,
    /// Final agent memory, for the learning method.
    pub memory: Option<Memory>,
    pub events: Vec<EventRecord>,
}

/// Scores one answer: the label extracted under `answer_key` must equal the
/// gold label exactly.
pub fn score(answer: &str, question: &LabeledQuestion) -> (Option<String>, bool, Option<String>) {
    match extract_json(answer, &OptionAnswerSchema::new([question.answer_key.as_str()])) {
        Ok(label) => {
            let correct = label == question.gold_label;
            (Some(label), correct, None)
        }
        Err(e) => (None, false, Some(e.to_string())),
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Runs `method` over `stream` for `settings.rounds` rounds and scores it.
///
/// The learning agent keeps one memory across rounds unless
/// `reset_memory` is set. Answer failures never abort the run; they are
/// scored wrong and tallied in the diagnostics.
pub fn run_experiment(
    method: Method,
    stream: &[LabeledQuestion],
    resources: &Resources,
    settings: &ExperimentSettings,
) -> Result<ExperimentOutput, HarnessError> {
    if settings.rounds == 0 {
        return Err(HarnessError::Invalid("rounds must be at least 1".into()));
    }
    let usage_before = resources.gateway.usage().snapshot();
    let mut answers: Vec<(u32, usize, Result<BaselineTrace, String>)> = Vec::new();
    let mut memory = None;
    let mut events = Vec::new();

    match method {
        Method::SeGpt => {
            let log = match &resources.event_log {
                Some(path) => EventLog::create(path).map_err(|e| HarnessError::Io {
                    path: path.clone(),
                    source: e,
                })?,
                None => EventLog::in_memory(),
            };
            let mut agent = Agent::new(
                resources.gateway.clone(),
                resources.embedder.clone(),
                resources.corpus.clone(),
                Memory::new(resources.memory),
                resources.pipeline,
                log,
            );
            for round in 1..=settings.rounds {
                if settings.reset_memory && round > 1 {
                    agent.replace_memory(Memory::new(resources.memory));
                }
                agent.set_round(Some(round));
                for (i, q) in stream.iter().enumerate() {
                    let trace = agent
                        .handle(&q.question)
                        .map(|a| BaselineTrace {
                            answer: a.text,
                            ..Default::default()
                        })
                        .map_err(|e| e.to_string());
                    answers.push((round, i, trace));
                }
            }
            events = agent.events().to_vec();
            memory = Some(agent.into_memory());
        }
        Method::ModifiedSelfIcl => {
            let mut index = VectorIndex::new(resources.embedder.dim());
            let mut embeddings = Vec::with_capacity(stream.len());
            for (i, q) in stream.iter().enumerate() {
                let e = resources.embedder.embed(&q.question.text)?;
                index.insert(i, e.clone())?;
                embeddings.push(e);
            }
            for round in 1..=settings.rounds {
                let labels = PseudoLabels::default();
                for (i, q) in stream.iter().enumerate() {
                    let hits = index.top_k_where(&embeddings[i], settings.neighbours, |j| *j != i)?;
                    let neighbours: Vec<_> = hits.iter().map(|h| &stream[h.id].question).collect();
                    let trace = modified_self_icl(&resources.gateway, &q.question, &neighbours, &labels)
                        .map_err(|e| e.to_string());
                    answers.push((round, i, trace));
                }
            }
        }
        _ => {
            let baselines = Baselines {
                gateway: &resources.gateway,
                corpus: resources.corpus.as_ref(),
                practice: resources.pipeline.practice,
                demonstrations: settings.demonstrations,
            };
            let one = |round: u32, i: usize| (round, i, baselines.run(method, &stream[i].question).map_err(|e| e.to_string()));
            let jobs: Vec<(u32, usize)> = (1..=settings.rounds)
                .flat_map(|r| (0..stream.len()).map(move |i| (r, i)))
                .collect();
            if settings.parallelism > 1 {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(settings.parallelism)
                    .build()
                    .map_err(|e| HarnessError::Invalid(e.to_string()))?;
                answers = pool.install(|| jobs.par_iter().map(|&(r, i)| one(r, i)).collect());
            } else {
                answers = jobs.iter().map(|&(r, i)| one(r, i)).collect();
            }
        }
    }

    let mut diagnostics = Diagnostics::default();
    let mut predictions = Vec::with_capacity(answers.len());
    let mut traces = Vec::new();
    let mut per_round: BTreeMap<u32, BTreeMap<String, DatasetScore>> = BTreeMap::new();
    for (round, i, trace) in answers {
        let q = &stream[i];
        let dataset = q.question.dataset_tag.clone().unwrap_or_default();
        let (predicted, correct, error) = match &trace {
            Ok(t) => {
                let scored = score(&t.answer, q);
                if scored.0.is_none() {
                    diagnostics.unparseable += 1;
                }
                scored
            }
            Err(e) => {
                diagnostics.failed += 1;
                (None, false, Some(e.clone()))
            }
        };
        let s = per_round.entry(round).or_default().entry(dataset.clone()).or_default();
        s.total += 1;
        s.correct += usize::from(correct);
        predictions.push(Prediction {
            round,
            question_id: q.question.question_id.clone(),
            dataset,
            predicted,
            gold_label: q.gold_label.clone(),
            correct,
            error,
        });
        if let Ok(t) = trace {
            traces.push((round, q.question.question_id.clone(), t));
        }
    }

    let rounds: Vec<RoundResult> = (1..=settings.rounds)
        .map(|round| {
            let datasets = per_round.remove(&round).unwrap_or_default();
            let accuracy = mean(datasets.values().map(DatasetScore::accuracy));
            RoundResult { round, datasets, accuracy }
        })
        .collect();
    let mut dataset_accuracy: BTreeMap<String, f64> = BTreeMap::new();
    let names: Vec<String> = rounds.iter().flat_map(|r| r.datasets.keys().cloned()).collect();
    for name in names {
        if dataset_accuracy.contains_key(&name) {
            continue;
        }
        let acc = mean(rounds.iter().filter_map(|r| r.datasets.get(&name)).map(DatasetScore::accuracy));
        dataset_accuracy.insert(name, acc);
    }
    let average = mean(rounds.iter().map(|r| r.accuracy));
    let stats = if events.is_empty() {
        None
    } else {
        Some(compute_stats(&events, settings.window, resources.tokenizer.as_ref())?)
    };
    let usage = UsageLedger::delta(&usage_before, &resources.gateway.usage().snapshot());

    Ok(ExperimentOutput {
        result: MethodResult {
            method,
            rounds,
            dataset_accuracy,
            average,
            diagnostics,
            usage,
            stats,
        },
        predictions,
        traces,
        memory,
        events,
    })
}
