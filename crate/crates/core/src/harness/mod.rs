//! Experiment harness: dataset adapters, baselines, scoring, run statistics
//! and report files.

mod dataset;
mod experiment;
mod isolation;
mod methods;
mod report;
mod stats;
pub mod svg;

use std::path::PathBuf;

pub use dataset::{load_and_mix, Dataset, DatasetKind, LabeledQuestion, ANSWER_KEY, CHOICE_KEY, OPTION_KEY};
pub use experiment::{
    run_experiment, score, DatasetScore, Diagnostics, ExperimentOutput, ExperimentSettings, MethodResult, Prediction,
    Resources, RoundResult, DEFAULT_ROUNDS,
};
pub use isolation::{scan_for_labels, LabelLeak};
pub use methods::{
    icl_answer_prompt, modified_self_icl, parse_instances, self_icl_generate_prompt, self_icl_label_prompt,
    zero_shot_cot_prompt, zero_shot_prompt, BaselineTrace, Baselines, Demonstration, Method, PseudoLabels, COT_SUFFIX,
    DEFAULT_DEMONSTRATIONS, DEFAULT_NEIGHBOURS,
};
pub use report::{emit_report, emit_stats, Report, ACCURACY_CSV, REPORT_JSON, ROUNDS_CSV};
pub use stats::{
    compute_stats, compute_stats_from_path, distinct_n, CategoryCounts, MemoryPoint, RunStats, SourceWindow,
    StatsError, TemplateCost, DEFAULT_WINDOW,
};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("dataset {dataset} line {line}: {message}")]
    Record {
        dataset: String,
        line: usize,
        message: String,
    },
    #[error("dataset {dataset} has {have} records, {need} requested")]
    InsufficientRecords { dataset: String, have: usize, need: usize },
    #[error(transparent)]
    Llm(#[from] crate::llm::LlmError),
    #[error(transparent)]
    Retrieval(#[from] crate::retrieval::RetrievalError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{0}")]
    Invalid(String),
}
