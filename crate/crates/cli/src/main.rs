use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use segpt_core::config::{RunConfig, API_KEY_ENV};
use segpt_core::corpus::{Tokenizer, WordPunctTokenizer};
use segpt_core::harness::{
    compute_stats_from_path, emit_report, emit_stats, load_and_mix, run_experiment, Method, Report, Resources,
};
use segpt_core::llm::{AuditLog, Gateway};
use segpt_core::memory::{Memory, TaskId};
use segpt_core::pipeline::{Agent, EventLog, UserQuestion};

#[derive(Parser)]
#[command(name = "segpt", version, about = "Lifelong experiential-learning agent and evaluation harness")]
struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; `run` creates a timestamped subdirectory in it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the simulated model, hash embeddings and local documents only.
    #[arg(long, global = true)]
    offline: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured method over the mixed datasets and write a report.
    Run,
    /// Answer one question against a stored memory, learning as usual.
    Ask {
        /// Memory snapshot; created if missing.
        #[arg(long)]
        memory: Option<PathBuf>,
        question: String,
    },
    /// List the tasks in a memory, or dump one task as JSON.
    Inspect {
        #[arg(long)]
        memory: Option<PathBuf>,
        #[arg(long)]
        task: Option<u64>,
    },
    /// Recompute run statistics from an event log.
    Stats {
        events: PathBuf,
        #[arg(long)]
        window: Option<usize>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = seed;
    }
    if cli.offline {
        cfg.force_offline();
    }
    Ok(cfg)
}

fn api_key() -> Option<String> {
    std::env::var(API_KEY_ENV).ok()
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Run => cmd_run(&cfg, cli.out.as_deref().unwrap_or(Path::new("runs"))),
        Command::Ask { memory, question } => {
            let path = memory_path(memory.as_deref(), &cfg)?;
            cmd_ask(&cfg, &path, question)
        }
        Command::Inspect { memory, task } => {
            let path = memory_path(memory.as_deref(), &cfg)?;
            cmd_inspect(&path, *task)
        }
        Command::Stats { events, window } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("stats"));
            cmd_stats(events, &out, window.unwrap_or(cfg.experiment.window))
        }
    }
}

fn memory_path(flag: Option<&Path>, cfg: &RunConfig) -> Result<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.memory.path.clone())
        .context("no memory path: pass --memory or set memory.path in the config")
}

fn run_dir(out: &Path) -> Result<PathBuf> {
    let stamp = chrono::Local::now().format("run-%Y%m%d-%H%M%S").to_string();
    let mut dir = out.join(&stamp);
    let mut n = 1;
    while dir.exists() {
        dir = out.join(format!("{stamp}-{n}"));
        n += 1;
    }
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<()> {
    let key = api_key();
    cfg.check_api_key(key.as_deref())?;
    if cfg.datasets.is_empty() {
        bail!("no datasets configured");
    }
    let datasets = cfg.load_datasets()?;
    let stream = load_and_mix(&datasets, cfg.experiment.per_dataset, cfg.experiment.seed)?;
    let backend = cfg.build_backend(key.as_deref())?;
    let embedder = cfg.build_embedder(key.as_deref());
    let tokenizer: Arc<dyn Tokenizer> = Arc::new(WordPunctTokenizer);
    let corpus = cfg.build_corpus(embedder.clone(), tokenizer.clone())?;

    let dir = run_dir(out)?;
    std::fs::write(dir.join("config.toml"), toml::to_string(cfg)?)?;
    let audit = Arc::new(AuditLog::create(&dir.join("audit"))?);
    let gateway = Gateway::new(backend, cfg.gateway_settings()).with_audit(audit);
    let resources = Resources {
        gateway,
        embedder,
        corpus,
        tokenizer,
        pipeline: cfg.pipeline,
        memory: cfg.memory_config(),
        event_log: Some(dir.join("events.jsonl")),
    };
    let settings = cfg.experiment_settings();

    let mut results = Vec::new();
    for &method in &cfg.experiment.methods {
        eprintln!("running {method} on {} questions x {} rounds", stream.len(), settings.rounds);
        let output = run_experiment(method, &stream, &resources, &settings)?;
        let predictions: String = output
            .predictions
            .iter()
            .map(|p| serde_json::to_string(p).map(|s| s + "\n"))
            .collect::<Result<_, _>>()?;
        std::fs::write(dir.join(format!("predictions_{method}.jsonl")), predictions)?;
        if let Some(memory) = &output.memory {
            memory.snapshot(&dir.join("memory.json"))?;
        }
        results.push(output.result);
    }

    let mut report = Report::new(results);
    report.config = Some(serde_json::to_value(cfg)?);
    if cfg.experiment.induction_rounds > 0 {
        if let Some(first) = stream.first() {
            let mut agent = Agent::new(
                resources.gateway.clone(),
                resources.embedder.clone(),
                resources.corpus.clone(),
                Memory::new(resources.memory),
                resources.pipeline,
                EventLog::in_memory(),
            );
            let task = agent.categorize(&first.question)?;
            report.induction_curve = agent.repeated_induction(&first.question, task.task_id, cfg.experiment.induction_rounds)?;
        }
    }
    emit_report(&report, &dir.join("report"))?;
    for m in &report.methods {
        println!("{}\t{:.4}", m.method, m.average);
    }
    println!("{}", dir.display());
    Ok(())
}

fn cmd_ask(cfg: &RunConfig, memory_path: &Path, question: &str) -> Result<()> {
    let key = api_key();
    let memory = if memory_path.exists() {
        Memory::load_snapshot(memory_path).with_context(|| format!("loading memory {}", memory_path.display()))?
    } else {
        Memory::new(cfg.memory_config())
    };
    if memory.config().dim != cfg.embedding.dim {
        bail!(
            "memory {} uses {}-dimensional embeddings but the config has {}",
            memory_path.display(),
            memory.config().dim,
            cfg.embedding.dim
        );
    }
    let backend = cfg.build_backend(key.as_deref())?;
    let embedder = cfg.build_embedder(key.as_deref());
    let corpus = cfg.build_corpus(embedder.clone(), Arc::new(WordPunctTokenizer))?;
    let gateway = Gateway::new(backend, cfg.gateway_settings());
    let mut agent = Agent::new(gateway, embedder, corpus, memory, cfg.pipeline, EventLog::in_memory());
    let answer = agent.handle(&UserQuestion::new("ask", question))?;
    let memory = agent.into_memory();
    memory.snapshot(memory_path)?;

    println!("{}", answer.text);
    match answer.task_id.map(|id| memory.task(id)) {
        Some(Ok(task)) => {
            let how = if answer.is_new_task { "new task" } else { "matched task" };
            println!("task: {} [{}] ({how})", task.name, task.task_id);
        }
        _ => println!("task: none"),
    }
    if answer.skipped_learning {
        println!("skipped learning: task is adequately learned");
    }
    if let Some(why) = &answer.degraded {
        println!("degraded: {why}");
    }
    Ok(())
}

fn cmd_inspect(memory_path: &Path, task: Option<u64>) -> Result<()> {
    let memory = Memory::load_snapshot(memory_path).with_context(|| format!("loading memory {}", memory_path.display()))?;
    match task {
        None => {
            println!("{} tasks", memory.len());
            for t in memory.tasks() {
                println!(
                    "{}\t{}\tstreak={}\tsuggestions={}\tprocedure={}",
                    t.task_id,
                    t.name,
                    t.perfect_streak,
                    t.experience.suggestions().len(),
                    t.experience.procedure().len()
                );
            }
        }
        Some(id) => {
            let t = memory.task(TaskId::new(id))?;
            let dump = serde_json::json!({
                "task_id": t.task_id,
                "name": t.name,
                "description": t.description,
                "practice_history": t.practice_history,
                "perfect_streak": t.perfect_streak,
                "experience": t.experience,
            });
            println!("{}", serde_json::to_string_pretty(&dump)?);
        }
    }
    Ok(())
}

fn cmd_stats(events: &Path, out: &Path, window: usize) -> Result<()> {
    let stats = compute_stats_from_path(events, window, &WordPunctTokenizer)
        .with_context(|| format!("reading {}", events.display()))?;
    emit_stats(&stats, Method::SeGpt.as_str(), out)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}
