mod common;

use std::sync::Arc;

use common::*;
use segpt_core::llm::extract::Verdict;
use segpt_core::llm::{PromptId, ScriptedBackend};
use segpt_core::memory::{Memory, TaskId};
use segpt_core::pipeline::{check_grammar, EventKind, PracticeExample, UserQuestion};

fn q(id: &str) -> UserQuestion {
    UserQuestion::new(id, format!("Question {id}: pick A or B.\nOption A: yes\nOption B: no"))
}

fn kinds(rig: &Rig) -> Vec<&'static str> {
    rig.agent.events().iter().map(|e| e.kind.name()).collect()
}

fn count(backend: &ScriptedBackend, id: PromptId) -> usize {
    backend.requests().iter().filter(|r| r.prompt_id == id).count()
}

fn memory_with(tasks: &[(&str, &[&str])]) -> (Memory, Vec<TaskId>) {
    let mut mem = empty_memory();
    let emb = embedder();
    let ids = tasks
        .iter()
        .map(|(desc, suggestions)| {
            let id = mem.create_task("t", desc, emb.embed(desc).unwrap()).unwrap();
            if !suggestions.is_empty() {
                mem.replace_experience(id, exp(suggestions, &["step"])).unwrap();
            }
            id
        })
        .collect();
    (mem, ids)
}

#[test]
fn categorize_on_empty_memory_creates_without_matching() {
    let backend = Arc::new(ScriptedBackend::new([task_json("Fill-in-blank choice", "Pick the word that fits.")]));
    let mut rig = rig(backend.clone(), no_documents(), empty_memory());
    let c = rig.agent.categorize(&q("q1")).unwrap();
    assert!(c.is_new);
    assert_eq!(rig.agent.memory().len(), 1);
    assert!(rig.agent.memory().task(c.task_id).unwrap().experience.is_empty());
    assert_eq!(count(&backend, PromptId::TaskMatch), 0);
    assert_eq!(kinds(&rig), ["task_generated", "task_created"]);
}

#[test]
fn categorize_matches_by_candidate_position() {
    let (mem, ids) = memory_with(&[("Sort words alphabetically.", &[]), ("Pick the word that fits.", &[])]);
    let backend = Arc::new(
        ScriptedBackend::new([task_json("x", "Pick the word that fits.")])
            .with_template(PromptId::TaskMatch, [id_json(1), id_json(1)]),
    );
    let mut rig = rig(backend.clone(), no_documents(), mem);
    let c = rig.agent.categorize(&q("q1")).unwrap();
    assert_eq!((c.task_id, c.is_new), (ids[1], false));
    assert_eq!(count(&backend, PromptId::TaskMatch), 2);
    let p2 = &backend.requests()[1].prompt;
    assert!(p2.contains("<Candidate Task 2>"));
    assert!(p2.contains("please return -1"));
}

#[test]
fn categorize_minus_one_and_invalid_ids_create_tasks() {
    let (mem, _) = memory_with(&[("Pick the word that fits.", &[])]);
    let backend = Arc::new(
        ScriptedBackend::new([task_json("x", "Pick the word that fits."), task_json("y", "Another task.")])
            .with_template(PromptId::TaskMatch, [id_json(-1), id_json(-1), id_json(7), id_json(7)]),
    );
    let mut rig = rig(backend, no_documents(), mem);
    assert!(rig.agent.categorize(&q("q1")).unwrap().is_new);
    assert!(rig.agent.categorize(&q("q2")).unwrap().is_new);
    assert_eq!(rig.agent.memory().len(), 3);
    let created: Vec<_> = rig
        .agent
        .events()
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::TaskCreated { rejected_choice, .. } => Some(*rejected_choice),
            _ => None,
        })
        .collect();
    assert_eq!(created, [None, Some(7)]);
}

#[test]
fn transfer_without_sources_returns_memory_experience() {
    let (mem, ids) = memory_with(&[("Only task.", &["keep calm"])]);
    let backend = Arc::new(ScriptedBackend::new(Vec::<String>::new()));
    let mut rig = rig(backend.clone(), no_documents(), mem);
    let e = rig.agent.transfer(&q("q"), ids[0]).unwrap();
    assert_eq!(e, rig.agent.memory().task(ids[0]).unwrap().experience);
    assert!(backend.requests().is_empty());
    assert_eq!(kinds(&rig), ["sources_selected", "transfer_done"]);
}

#[test]
fn transfer_uses_selected_sources_and_skips_merge_for_empty_memory() {
    let (mem, ids) = memory_with(&[
        ("Target task about words.", &[]),
        ("Source task about words.", &["s1"]),
        ("Second source about words.", &["s2"]),
        ("Unlearned task about words.", &[]),
    ]);
    let x = exp_json(&["transferred"], &["do it"]);
    let backend = Arc::new(
        ScriptedBackend::new(Vec::<String>::new())
            .with_template(PromptId::SourceSelection, [ids_json(&[1, 2, 9])])
            .with_template(PromptId::ExperienceTransfer, [x]),
    );
    let mut rig = rig(backend.clone(), no_documents(), mem);
    let e = rig.agent.transfer(&q("q"), ids[0]).unwrap();
    assert_eq!(e, exp(&["transferred"], &["do it"]));
    assert_eq!(count(&backend, PromptId::ExperienceMerge), 0);
    let p3 = &backend.requests()[0].prompt;
    assert!(!p3.contains("Target task about words.\n</Candidate"));
    assert!(!p3.contains("Unlearned task"));
    match &rig.agent.events()[0].kind {
        EventKind::SourcesSelected { candidates, selected, ignored_ids, .. } => {
            assert_eq!(candidates.len(), 2);
            assert_eq!(selected.len(), 2);
            assert_eq!(ignored_ids, &[9]);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn transfer_merges_with_existing_experience_and_bounds_lists() {
    let (mem, ids) = memory_with(&[("Target task about words.", &["old"]), ("Source task about words.", &["s1"])]);
    let many: Vec<String> = (0..25).map(|i| format!("m{i}")).collect();
    let many: Vec<&str> = many.iter().map(String::as_str).collect();
    let backend = Arc::new(
        ScriptedBackend::new(Vec::<String>::new())
            .with_template(PromptId::SourceSelection, [ids_json(&[1])])
            .with_template(PromptId::ExperienceTransfer, [exp_json(&["x"], &["x"])])
            .with_template(PromptId::ExperienceMerge, [exp_json(&many, &many)]),
    );
    let mut rig = rig(backend.clone(), no_documents(), mem);
    let e = rig.agent.transfer(&q("q"), ids[0]).unwrap();
    assert_eq!(e.suggestions().len(), 20);
    assert_eq!(e.procedure().len(), 20);
    assert_eq!(e.suggestions()[19], "m19");
    let merge = backend.requests().into_iter().find(|r| r.prompt_id == PromptId::ExperienceMerge).unwrap();
    assert!(merge.prompt.contains(r#""Task Processing Flow 1": ["x"]"#));
    assert!(merge.prompt.contains(r#""Task Processing Flow 2": ["step"]"#));
}

fn practice_backend(verdicts: &[&str]) -> ScriptedBackend {
    let n = verdicts.len();
    ScriptedBackend::new(Vec::<String>::new())
        .with_template(PromptId::QuestionGeneration, (0..n).map(|i| new_question(&format!("practice-{i}"))))
        .with_template(PromptId::PracticeAnswer, (0..n).map(|i| format!("reasoning-{i}")))
        .with_template(PromptId::Verification, doubled_verdicts(verdicts))
}

#[test]
fn practice_discards_inconclusive_and_counts_incorrect() {
    let (mem, ids) = memory_with(&[("Target.", &[])]);
    let backend = Arc::new(
        practice_backend(&["correct", "inconclusive", "wrong", "correct", "correct", "correct"])
            .with_template(PromptId::ExperienceInduction, [exp_json(&["x"], &["y"])]),
    );
    let mut rig = rig(backend.clone(), fixture_corpus(), mem);
    let out = rig.agent.practice(&q("q"), ids[0], &segpt_core::memory::Experience::empty()).unwrap();
    assert_eq!(out.examples.len(), 5);
    assert_eq!(out.discarded, 1);
    assert_eq!(out.incorrect(), 1);
    assert_eq!(rig.agent.memory().task(ids[0]).unwrap().practice_history, [1]);
    let docs: Vec<_> = out.examples.iter().map(|e| e.doc_id.clone().unwrap()).collect();
    assert_eq!(docs.len(), 5);
    assert_ne!(docs[0], docs[2], "documents rotate by attempt index");
    assert_eq!(docs[0], docs[1]);

    rig.agent.induce(&q("q"), ids[0], &out.examples, &segpt_core::memory::Experience::empty()).unwrap();
    let p9 = backend.requests().into_iter().find(|r| r.prompt_id == PromptId::ExperienceInduction).unwrap();
    assert!(!p9.prompt.contains("practice-1\n"));
    assert!(p9.prompt.find("<Correct Example 4>").unwrap() < p9.prompt.find("<Incorrect Example 1>").unwrap());
    assert!(p9.prompt.contains("<Incorrect Example 1>\n<Question>\npractice-2\n"));
}

#[test]
fn practice_stops_at_attempt_cap() {
    let (mem, ids) = memory_with(&[("Target.", &[])]);
    let mut verdicts = vec!["correct", "wrong", "correct"];
    verdicts.extend(std::iter::repeat("inconclusive").take(12));
    let backend = Arc::new(practice_backend(&verdicts));
    let mut rig = rig(backend.clone(), fixture_corpus(), mem);
    let out = rig.agent.practice(&q("q"), ids[0], &segpt_core::memory::Experience::empty()).unwrap();
    assert_eq!((out.examples.len(), out.discarded, out.attempts), (3, 12, 15));
    assert!(out.degraded);
    assert_eq!(backend.remaining(), 0);
}

#[test]
fn practice_without_documents_is_degraded_but_runs() {
    let (mem, ids) = memory_with(&[("Target.", &[])]);
    let backend = Arc::new(practice_backend(&["correct"; 5]));
    let mut rig = rig(backend.clone(), no_documents(), mem);
    let out = rig.agent.practice(&q("q"), ids[0], &segpt_core::memory::Experience::empty()).unwrap();
    assert_eq!(out.examples.len(), 5);
    assert!(out.degraded);
    assert!(backend.requests()[0].prompt.starts_with("<Reference Text>\n\n</Reference Text>"));
}

fn examples(verdicts: &[Verdict]) -> Vec<PracticeExample> {
    verdicts
        .iter()
        .enumerate()
        .map(|(i, v)| PracticeExample {
            question: format!("pq{i}"),
            reasoning: format!("pr{i}"),
            verdict: *v,
            doc_id: None,
        })
        .collect()
}

#[test]
fn induce_replaces_memory_with_or_without_merge() {
    let (mem, ids) = memory_with(&[("Target.", &["old"])]);
    let backend = Arc::new(
        ScriptedBackend::new(Vec::<String>::new())
            .with_template(PromptId::ExperienceInduction, [exp_json(&["x"], &[]), exp_json(&["x2"], &[])])
            .with_template(PromptId::ExperienceMerge, [exp_json(&["z"], &["z"])]),
    );
    let mut rig = rig(backend.clone(), no_documents(), mem);
    let ex = examples(&[Verdict::Correct]);
    let empty = segpt_core::memory::Experience::empty();
    rig.agent.induce(&q("q"), ids[0], &ex, &empty).unwrap();
    assert_eq!(rig.agent.memory().task(ids[0]).unwrap().experience, exp(&["x"], &[]));
    rig.agent.induce(&q("q"), ids[0], &ex, &exp(&["t"], &[])).unwrap();
    assert_eq!(rig.agent.memory().task(ids[0]).unwrap().experience, exp(&["z"], &["z"]));
}

#[test]
fn induce_with_only_wrong_examples_renders_empty_correct_block() {
    let (mem, ids) = memory_with(&[("Target.", &[])]);
    let backend = Arc::new(
        ScriptedBackend::new(Vec::<String>::new())
            .with_template(PromptId::ExperienceInduction, [exp_json(&["x"], &[])]),
    );
    let mut rig = rig(backend.clone(), no_documents(), mem);
    let ex = examples(&[Verdict::Wrong; 5]);
    rig.agent.induce(&q("q"), ids[0], &ex, &segpt_core::memory::Experience::empty()).unwrap();
    let p9 = &backend.requests()[0].prompt;
    assert!(!p9.contains("<Correct Example"));
    assert!(p9.contains("<Incorrect Example 5>"));
    assert!(p9.contains("correct or incorrect answers:\n<Incorrect Example 1>"));
}

#[test]
fn induce_falls_back_when_summary_is_unparseable() {
    let (mem, ids) = memory_with(&[("Target.", &[])]);
    let backend = Arc::new(ScriptedBackend::new(["no json", "still none", "nope"]));
    let mut rig = rig(backend, no_documents(), mem);
    let transferred = exp(&["t"], &["p"]);
    let got = rig.agent.induce(&q("q"), ids[0], &examples(&[Verdict::Correct]), &transferred).unwrap();
    assert_eq!(got, transferred);
    assert_eq!(rig.agent.memory().task(ids[0]).unwrap().experience, transferred);
    assert!(matches!(&rig.agent.events()[0].kind, EventKind::InductionDone { fallback: Some(_), .. }));
}

#[test]
fn respond_passes_answer_through() {
    let backend = Arc::new(ScriptedBackend::new([r#"{"correct option ID": "B"}"#]));
    let mut rig = rig(backend.clone(), no_documents(), empty_memory());
    let a = rig.agent.respond(&q("q"), None, &exp(&["s1", "s2"], &["p1", "p2", "p3"])).unwrap();
    assert_eq!(a.text, r#"{"correct option ID": "B"}"#);
    let p10 = &backend.requests()[0].prompt;
    assert!(p10.find("- s2").unwrap() < p10.find("3. p3").unwrap());
}

fn learning_script(backend: ScriptedBackend, description: &str, verdict: &str) -> ScriptedBackend {
    backend
        .with_template(PromptId::TaskInduction, [task_json("t", description)])
        .with_template(PromptId::QuestionGeneration, (0..5).map(|i| new_question(&format!("g{i}"))))
        .with_template(PromptId::PracticeAnswer, (0..5).map(|i| format!("r{i}")))
        .with_template(PromptId::Verification, doubled_verdicts(&[verdict; 5]))
        .with_template(PromptId::ExperienceInduction, [exp_json(&["learned"], &["step"])])
        .with_template(PromptId::ExperienceReasoning, ["A"])
}

#[test]
fn handle_new_task_event_sequence() {
    let backend = Arc::new(learning_script(ScriptedBackend::new(Vec::<String>::new()), "Desc.", "correct"));
    let mut rig = rig(backend.clone(), fixture_corpus(), empty_memory());
    let a = rig.agent.handle(&q("q1")).unwrap();
    assert_eq!(a.text, "A");
    assert!(a.is_new_task && !a.skipped_learning && a.degraded.is_none());
    assert_eq!(
        kinds(&rig),
        ["task_generated", "task_created", "sources_selected", "transfer_done", "practice_round", "induction_done", "responded"]
    );
    assert_eq!(backend.remaining(), 0);
    check_grammar(rig.agent.events()).unwrap();
    let task = rig.agent.memory().tasks().next().unwrap();
    assert_eq!(task.experience, exp(&["learned"], &["step"]));
}

#[test]
fn handle_skips_learning_after_three_perfect_rounds_and_resets_on_error() {
    let mut backend = ScriptedBackend::new(Vec::<String>::new());
    for i in 0..3 {
        backend = learning_script(backend, "Same desc.", "correct");
        if i > 0 {
            backend = backend.with_template(PromptId::TaskMatch, [id_json(1), id_json(1)]);
        }
        if i > 0 {
            backend = backend.with_template(PromptId::ExperienceMerge, [exp_json(&["learned"], &["step"])]);
        }
    }
    backend = backend
        .with_template(PromptId::TaskInduction, [task_json("t", "Same desc.")])
        .with_template(PromptId::TaskMatch, [id_json(1), id_json(1)])
        .with_template(PromptId::ExperienceReasoning, ["B"]);
    let backend = Arc::new(backend);
    let mut rig = rig(backend.clone(), fixture_corpus(), empty_memory());
    for i in 0..4 {
        rig.agent.handle(&q(&format!("q{i}"))).unwrap();
    }
    assert_eq!(backend.remaining(), 0);
    let last: Vec<_> = rig.agent.events().iter().filter(|e| e.question_id == "q3").map(|e| e.kind.name()).collect();
    assert_eq!(last, ["task_generated", "task_matched", "skip_learning", "responded"]);
    check_grammar(rig.agent.events()).unwrap();
    let task = rig.agent.memory().tasks().next().unwrap();
    assert_eq!(task.practice_history, [0, 0, 0]);

    let mut mem = rig.agent.into_memory();
    let id = mem.tasks().next().unwrap().task_id;
    mem.record_practice_outcome(id, 2).unwrap();
    assert!(!mem.is_adequately_learned(id).unwrap());
}

#[test]
fn handle_answers_even_when_categorization_fails() {
    let backend = Arc::new(
        ScriptedBackend::new(Vec::<String>::new())
            .with_template(PromptId::TaskInduction, ["?", "??", "???"])
            .with_template(PromptId::ExperienceReasoning, ["A"]),
    );
    let mut rig = rig(backend, no_documents(), empty_memory());
    let a = rig.agent.handle(&q("q")).unwrap();
    assert_eq!(a.text, "A");
    assert!(a.degraded.unwrap().starts_with("categorization"));
    assert_eq!(kinds(&rig), ["responded"]);
}

#[test]
fn repeated_induction_counts_grow_with_merges() {
    let (mem, ids) = memory_with(&[("Target.", &[])]);
    let rounds = 3;
    let mut backend = practice_backend(&["correct"; 15])
        .with_template(PromptId::ExperienceInduction, (0..rounds).map(|_| exp_json(&["i1", "i2"], &[])));
    backend = backend.with_template(
        PromptId::ExperienceMerge,
        [exp_json(&["a", "b", "c", "d"], &[]), exp_json(&["a", "b", "c", "d", "e", "f"], &[])],
    );
    let backend = Arc::new(backend);
    let mut rig = rig(backend.clone(), fixture_corpus(), mem);
    let counts = rig.agent.repeated_induction(&q("q"), ids[0], rounds).unwrap();
    assert_eq!(counts, [2, 4, 6]);
    assert!(counts.iter().all(|c| *c <= 40));
    assert_eq!(backend.remaining(), 0);
}
