use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use segpt_core::memory::{Memory, MemoryConfig};

const DATASETS: [&str; 6] = ["mmlu", "ecare", "socialiqa", "winogrande", "help", "logiqa2"];

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn segpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segpt"))
        .args(args)
        .env_remove("SEGPT_API_KEY")
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, backend: &str, methods: &[&str]) -> PathBuf {
    let f = fixtures();
    let mut toml = format!(
        "[backend]\nkind = \"{backend}\"\n\n[corpus]\nkind = \"fixture\"\nfixture_dir = \"{}\"\n\n\
         [experiment]\nper_dataset = 1\nseed = 9\nrounds = 2\nmethods = {methods:?}\n",
        f.join("corpus").display()
    );
    for id in DATASETS {
        toml.push_str(&format!(
            "\n[[datasets]]\nid = \"{id}\"\nadapter = \"{id}\"\npath = \"{}\"\n",
            f.join(format!("datasets/{id}.jsonl")).display()
        ));
    }
    let path = dir.join("run.toml");
    std::fs::write(&path, toml).unwrap();
    path
}

fn run_dir(o: &Output) -> PathBuf {
    PathBuf::from(stdout(o).lines().last().unwrap())
}

#[test]
fn offline_run_writes_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "simulated", &["se_gpt", "zero_shot"]);
    let out = tmp.path().join("runs");
    let o = segpt(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = run_dir(&o);
    for f in ["config.toml", "events.jsonl", "memory.json", "predictions_se_gpt.jsonl", "report/accuracy.csv", "report/report.json"] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
    let methods: Vec<String> = stdout(&o)
        .lines()
        .filter_map(|l| l.split_once('\t').map(|(m, _)| m.to_string()))
        .collect();
    assert_eq!(methods, ["se_gpt", "zero_shot"]);
}

#[test]
fn openai_backend_without_key_fails_before_doing_anything() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "openai", &["zero_shot"]);
    let out = tmp.path().join("runs");
    let o = segpt(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "run"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("SEGPT_API_KEY"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn same_seed_gives_identical_event_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "simulated", &["se_gpt"]);
    let logs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let out = tmp.path().join(format!("runs{i}"));
            let o = segpt(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "4", "run"]);
            assert!(o.status.success(), "{}", stderr(&o));
            std::fs::read(run_dir(&o).join("events.jsonl")).unwrap()
        })
        .collect();
    assert!(!logs[0].is_empty());
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn ask_creates_a_task_and_inspect_lists_it() {
    let tmp = tempfile::tempdir().unwrap();
    let mem = tmp.path().join("memory.json");
    let m = mem.to_str().unwrap();
    let q = "Which is a mammal?\nOption A: whale\nOption B: shark";
    let o = segpt(&["--offline", "ask", "--memory", m, q]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("(new task)"), "{}", stdout(&o));

    let o = segpt(&["inspect", "--memory", m]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("1 tasks\n"), "{}", stdout(&o));

    let o = segpt(&["inspect", "--memory", m, "--task", "1"]);
    let dump: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(dump["task_id"], "1");
    assert!(dump["experience"].is_object());
}

#[test]
fn unreadable_memory_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mem = tmp.path().join("memory.json");
    std::fs::write(&mem, "{not a snapshot").unwrap();
    let o = segpt(&["--offline", "ask", "--memory", mem.to_str().unwrap(), "Q?"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error: loading memory"), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&mem).unwrap(), "{not a snapshot");
}

#[test]
fn inspect_empty_memory() {
    let tmp = tempfile::tempdir().unwrap();
    let mem = tmp.path().join("memory.json");
    Memory::new(MemoryConfig::new(256)).snapshot(&mem).unwrap();
    let o = segpt(&["inspect", "--memory", mem.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "0 tasks\n");
}

#[test]
fn stats_rejects_an_empty_log() {
    let tmp = tempfile::tempdir().unwrap();
    let log = tmp.path().join("events.jsonl");
    std::fs::write(&log, "").unwrap();
    let o = segpt(&["--out", tmp.path().join("s").to_str().unwrap(), "stats", log.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no events"), "{}", stderr(&o));
}

#[test]
fn stats_window_sets_the_bucket_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "simulated", &["se_gpt"]);
    let out = tmp.path().join("runs");
    let o = segpt(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = run_dir(&o).join("events.jsonl");
    // 6 questions over 2 rounds: operating rounds 0..12.
    for (window, buckets) in [("5", 3), ("4", 3), ("12", 1), ("1", 12)] {
        let dest = tmp.path().join(format!("stats-{window}"));
        let o = segpt(&["--out", dest.to_str().unwrap(), "stats", log.to_str().unwrap(), "--window", window]);
        assert!(o.status.success(), "{}", stderr(&o));
        let stats: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(stats["source_windows"].as_array().unwrap().len(), buckets, "window {window}");
        assert!(dest.join("se_gpt_sources.csv").exists());
    }
}
