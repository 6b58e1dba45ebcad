//! Report files: accuracy and statistics CSVs, a JSON dump and SVG charts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experiment::MethodResult;
use super::stats::RunStats;
use super::svg::{bar_chart, line_chart, Series};
use super::HarnessError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Dataset columns, in order.
    pub datasets: Vec<String>,
    pub methods: Vec<MethodResult>,
    /// Insight counts per round of a repeated-induction study, if one ran.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub induction_curve: Vec<usize>,
    /// Resolved run configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl Report {
    /// Builds a report whose dataset columns are the union over methods, sorted.
    pub fn new(methods: Vec<MethodResult>) -> Self {
        let mut datasets: Vec<String> = methods.iter().flat_map(|m| m.dataset_accuracy.keys().cloned()).collect();
        datasets.sort();
        datasets.dedup();
        Self {
            datasets,
            methods,
            ..Default::default()
        }
    }
}

pub const ACCURACY_CSV: &str = "accuracy.csv";
pub const ROUNDS_CSV: &str = "rounds.csv";
pub const REPORT_JSON: &str = "report.json";
pub const STATISTICS_CSV: &str = "statistics.csv";
pub const SOURCES_CSV: &str = "sources.csv";
pub const MEMORY_CSV: &str = "memory.csv";
pub const TOKENS_CSV: &str = "token_usage.csv";
pub const CATEGORIES_CSV: &str = "categorization.csv";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_file(dir: &Path, name: &str, contents: &[u8], written: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(io_err(&path))?;
    written.push(path);
    Ok(())
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| HarnessError::Invalid(format!("csv: {e}"));
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.write_record(r).map_err(to_err)?;
    }
    w.into_inner().map_err(|e| HarnessError::Invalid(format!("csv: {e}")))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes every report file into `out_dir` and returns their paths.
/// Rendering is deterministic: the same report gives the same bytes.
pub fn emit_report(report: &Report, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();

    let mut header = vec!["method"];
    header.extend(report.datasets.iter().map(String::as_str));
    header.push("average");
    let rows: Vec<Vec<String>> = report
        .methods
        .iter()
        .map(|m| {
            let mut row = vec![m.method.to_string()];
            row.extend(report.datasets.iter().map(|d| opt(m.dataset_accuracy.get(d).copied())));
            row.push(m.average.to_string());
            row
        })
        .collect();
    write_file(out_dir, ACCURACY_CSV, &csv_bytes(&header, &rows)?, &mut written)?;

    let mut header = vec!["method", "round"];
    header.extend(report.datasets.iter().map(String::as_str));
    header.push("average");
    let rows: Vec<Vec<String>> = report
        .methods
        .iter()
        .flat_map(|m| {
            m.rounds.iter().map(|r| {
                let mut row = vec![m.method.to_string(), r.round.to_string()];
                row.extend(report.datasets.iter().map(|d| opt(r.datasets.get(d).map(|s| s.accuracy()))));
                row.push(r.accuracy.to_string());
                row
            })
        })
        .collect();
    write_file(out_dir, ROUNDS_CSV, &csv_bytes(&header, &rows)?, &mut written)?;

    let json = serde_json::to_vec_pretty(report).map_err(|e| HarnessError::Invalid(e.to_string()))?;
    write_file(out_dir, REPORT_JSON, &json, &mut written)?;

    let methods: Vec<String> = report.methods.iter().map(|m| m.method.to_string()).collect();
    let series: Vec<(String, Vec<f64>)> = vec![("average accuracy".into(), report.methods.iter().map(|m| m.average).collect())];
    write_file(out_dir, "accuracy.svg", bar_chart("Average accuracy", "accuracy", &methods, &series).as_bytes(), &mut written)?;

    for m in &report.methods {
        if let Some(stats) = &m.stats {
            written.extend(emit_stats(stats, &m.method.to_string(), out_dir)?);
        }
    }

    if !report.induction_curve.is_empty() {
        let s = Series {
            name: "insights".into(),
            points: report
                .induction_curve
                .iter()
                .enumerate()
                .map(|(i, c)| ((i + 1) as f64, Some(*c as f64)))
                .collect(),
        };
        let svg = line_chart("Insights after repeated induction", "induction round", "insights", &[s]);
        write_file(out_dir, "induction.svg", svg.as_bytes(), &mut written)?;
    }
    Ok(written)
}

/// Writes the statistics block of one run. Used by the report and by
/// offline recomputation from an event log, so both produce the same files.
pub fn emit_stats(stats: &RunStats, label: &str, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();
    let prefix = |name: &str| format!("{label}_{name}");

    let t = &stats.totals;
    let rows: Vec<Vec<String>> = [
        ("questions", t.responded.to_string()),
        ("matched", t.matched.to_string()),
        ("created", t.created.to_string()),
        ("skipped", t.skipped.to_string()),
        ("matched_pct", stats.matched_pct.to_string()),
        ("created_pct", stats.created_pct.to_string()),
        ("skipped_pct", stats.skipped_pct.to_string()),
        ("practice_questions", stats.practice_questions.to_string()),
        ("dist1", opt(stats.dist1)),
        ("dist2", opt(stats.dist2)),
        ("window", stats.window.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| vec![k.to_string(), v])
    .collect();
    write_file(out_dir, &prefix(STATISTICS_CSV), &csv_bytes(&["metric", "value"], &rows)?, &mut written)?;

    let rows: Vec<Vec<String>> = stats
        .per_dataset
        .iter()
        .map(|(d, c)| {
            vec![
                d.clone(),
                c.matched.to_string(),
                c.created.to_string(),
                c.skipped.to_string(),
                c.responded.to_string(),
                c.matched_pct().to_string(),
                c.skipped_pct().to_string(),
            ]
        })
        .collect();
    let header = ["dataset", "matched", "created", "skipped", "responded", "matched_pct", "skipped_pct"];
    write_file(out_dir, &prefix(CATEGORIES_CSV), &csv_bytes(&header, &rows)?, &mut written)?;

    let rows: Vec<Vec<String>> = stats
        .source_windows
        .iter()
        .map(|w| {
            vec![
                w.start.to_string(),
                w.end.to_string(),
                w.questions.to_string(),
                w.sources.to_string(),
                opt(w.average),
            ]
        })
        .collect();
    let header = ["window_start", "window_end", "questions", "sources", "average_sources"];
    write_file(out_dir, &prefix(SOURCES_CSV), &csv_bytes(&header, &rows)?, &mut written)?;

    let rows: Vec<Vec<String>> = stats
        .memory_growth
        .iter()
        .map(|p| vec![p.step.to_string(), p.tasks.to_string(), p.insights.to_string()])
        .collect();
    write_file(out_dir, &prefix(MEMORY_CSV), &csv_bytes(&["step", "tasks", "insights"], &rows)?, &mut written)?;

    let rows: Vec<Vec<String>> = stats
        .token_usage
        .iter()
        .map(|(id, c)| {
            vec![
                id.to_string(),
                c.questions.to_string(),
                c.total.calls.to_string(),
                c.total.attempts.to_string(),
                c.total.input_tokens.to_string(),
                c.total.output_tokens.to_string(),
                c.avg_calls.to_string(),
                c.avg_input_tokens.to_string(),
                c.avg_output_tokens.to_string(),
                c.avg_total_tokens.to_string(),
            ]
        })
        .collect();
    let header = [
        "template",
        "questions",
        "calls",
        "attempts",
        "input_tokens",
        "output_tokens",
        "avg_calls",
        "avg_input_tokens",
        "avg_output_tokens",
        "avg_total_tokens",
    ];
    write_file(out_dir, &prefix(TOKENS_CSV), &csv_bytes(&header, &rows)?, &mut written)?;

    let sources = Series {
        name: label.to_string(),
        points: stats
            .source_windows
            .iter()
            .map(|w| (w.start as f64, w.average))
            .collect(),
    };
    let svg = line_chart("Average source tasks per target task", "operating round", "source tasks", &[sources]);
    write_file(out_dir, &prefix("sources.svg"), svg.as_bytes(), &mut written)?;

    let mut categories: Vec<String> = stats.per_dataset.keys().cloned().collect();
    categories.push("all".into());
    let matched: Vec<f64> = stats.per_dataset.values().map(|c| c.matched_pct()).chain([stats.matched_pct]).collect();
    let skipped: Vec<f64> = stats.per_dataset.values().map(|c| c.skipped_pct()).chain([stats.skipped_pct]).collect();
    let svg = bar_chart(
        "Questions matched to memory or skipping learning",
        "percent",
        &categories,
        &[("matched".into(), matched), ("skipped".into(), skipped)],
    );
    write_file(out_dir, &prefix("categorization.svg"), svg.as_bytes(), &mut written)?;

    let growth = |name: &str, f: fn(&super::stats::MemoryPoint) -> usize| Series {
        name: name.to_string(),
        points: stats.memory_growth.iter().map(|p| (p.step as f64, Some(f(p) as f64))).collect(),
    };
    let svg = line_chart("Tasks in memory", "operating round", "tasks", &[growth("tasks", |p| p.tasks)]);
    write_file(out_dir, &prefix("memory_tasks.svg"), svg.as_bytes(), &mut written)?;
    let svg = line_chart("Insights in memory", "operating round", "insights", &[growth("insights", |p| p.insights)]);
    write_file(out_dir, &prefix("memory_insights.svg"), svg.as_bytes(), &mut written)?;

    Ok(written)
}
