//! The prompt catalog.
//!
//! Templates 1 to 11 live in `prompts/promptNN.txt` and are rendered with
//! minijinja (`trim_blocks` + `lstrip_blocks`). Each template declares its
//! slots; rendering fails on a missing, extra or wrongly shaped slot.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use minijinja::{Environment, UndefinedBehavior, Value};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::memory::Experience;

/// Identifies a prompt for accounting and auditing. The first eleven
/// variants are the catalog templates; the rest are baseline prompts that
/// are assembled in code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PromptId {
    TaskInduction,
    TaskMatch,
    SourceSelection,
    ExperienceTransfer,
    ExperienceMerge,
    QuestionGeneration,
    PracticeAnswer,
    Verification,
    ExperienceInduction,
    ExperienceReasoning,
    ExperienceGeneration,
    ZeroShot,
    ZeroShotCot,
    SelfIclGenerate,
    SelfIclLabel,
    IclAnswer,
}

impl PromptId {
    pub const CATALOG: [PromptId; 11] = [
        PromptId::TaskInduction,
        PromptId::TaskMatch,
        PromptId::SourceSelection,
        PromptId::ExperienceTransfer,
        PromptId::ExperienceMerge,
        PromptId::QuestionGeneration,
        PromptId::PracticeAnswer,
        PromptId::Verification,
        PromptId::ExperienceInduction,
        PromptId::ExperienceReasoning,
        PromptId::ExperienceGeneration,
    ];

    /// Catalog number (1..=11) for template prompts.
    pub fn number(self) -> Option<u8> {
        PromptId::CATALOG.iter().position(|p| *p == self).map(|i| i as u8 + 1)
    }

    pub fn from_number(n: u8) -> Result<Self, PromptError> {
        (1..=11)
            .contains(&n)
            .then(|| PromptId::CATALOG[n as usize - 1])
            .ok_or(PromptError::UnknownTemplate(n))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PromptId::TaskInduction => "prompt1",
            PromptId::TaskMatch => "prompt2",
            PromptId::SourceSelection => "prompt3",
            PromptId::ExperienceTransfer => "prompt4",
            PromptId::ExperienceMerge => "prompt5",
            PromptId::QuestionGeneration => "prompt6",
            PromptId::PracticeAnswer => "prompt7",
            PromptId::Verification => "prompt8",
            PromptId::ExperienceInduction => "prompt9",
            PromptId::ExperienceReasoning => "prompt10",
            PromptId::ExperienceGeneration => "prompt11",
            PromptId::ZeroShot => "zero_shot",
            PromptId::ZeroShotCot => "zero_shot_cot",
            PromptId::SelfIclGenerate => "self_icl_generate",
            PromptId::SelfIclLabel => "self_icl_label",
            PromptId::IclAnswer => "icl_answer",
        }
    }

    const ALL: [PromptId; 16] = [
        PromptId::TaskInduction,
        PromptId::TaskMatch,
        PromptId::SourceSelection,
        PromptId::ExperienceTransfer,
        PromptId::ExperienceMerge,
        PromptId::QuestionGeneration,
        PromptId::PracticeAnswer,
        PromptId::Verification,
        PromptId::ExperienceInduction,
        PromptId::ExperienceReasoning,
        PromptId::ExperienceGeneration,
        PromptId::ZeroShot,
        PromptId::ZeroShotCot,
        PromptId::SelfIclGenerate,
        PromptId::SelfIclLabel,
        PromptId::IclAnswer,
    ];
}

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptId::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| PromptError::UnknownName(s.to_string()))
    }
}

impl Serialize for PromptId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for PromptId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("unknown template id {0}")]
    UnknownTemplate(u8),
    #[error("unknown prompt name {0:?}")]
    UnknownName(String),
    #[error("{template}: missing slot `{slot}`")]
    MissingSlot { template: PromptId, slot: String },
    #[error("{template}: unexpected slot `{slot}`")]
    ExtraSlot { template: PromptId, slot: String },
    #[error("{template}: slot `{slot}` must be {expected}")]
    SlotShape {
        template: PromptId,
        slot: String,
        expected: &'static str,
    },
    #[error("{template}: render failed: {message}")]
    Render { template: PromptId, message: String },
}

/// Value bound to a template slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SlotValue {
    Text(String),
    List(Vec<String>),
    Records(Vec<BTreeMap<String, String>>),
}

impl From<&str> for SlotValue {
    fn from(s: &str) -> Self {
        SlotValue::Text(s.to_string())
    }
}

impl From<String> for SlotValue {
    fn from(s: String) -> Self {
        SlotValue::Text(s)
    }
}

impl From<Vec<String>> for SlotValue {
    fn from(v: Vec<String>) -> Self {
        SlotValue::List(v)
    }
}

pub type Slots = BTreeMap<String, SlotValue>;

#[derive(Debug, Clone, Copy)]
enum SlotKind {
    Text,
    List,
    Records(&'static [&'static str]),
}

struct TemplateSpec {
    id: PromptId,
    source: &'static str,
    slots: &'static [(&'static str, SlotKind)],
}

const SOURCE_FIELDS: &[&str] = &["description", "experience"];
const EXAMPLE_FIELDS: &[&str] = &["question", "reasoning"];

static TEMPLATES: [TemplateSpec; 11] = [
    TemplateSpec {
        id: PromptId::TaskInduction,
        source: include_str!("../../prompts/prompt01.txt"),
        slots: &[("user_question", SlotKind::Text)],
    },
    TemplateSpec {
        id: PromptId::TaskMatch,
        source: include_str!("../../prompts/prompt02.txt"),
        slots: &[("target", SlotKind::Text), ("candidates", SlotKind::List)],
    },
    TemplateSpec {
        id: PromptId::SourceSelection,
        source: include_str!("../../prompts/prompt03.txt"),
        slots: &[("target", SlotKind::Text), ("candidates", SlotKind::List)],
    },
    TemplateSpec {
        id: PromptId::ExperienceTransfer,
        source: include_str!("../../prompts/prompt04.txt"),
        slots: &[("target", SlotKind::Text), ("sources", SlotKind::Records(SOURCE_FIELDS))],
    },
    TemplateSpec {
        id: PromptId::ExperienceMerge,
        source: include_str!("../../prompts/prompt05.txt"),
        slots: &[
            ("target", SlotKind::Text),
            ("suggestions", SlotKind::List),
            ("procedure_1", SlotKind::List),
            ("procedure_2", SlotKind::List),
        ],
    },
    TemplateSpec {
        id: PromptId::QuestionGeneration,
        source: include_str!("../../prompts/prompt06.txt"),
        slots: &[
            ("reference", SlotKind::Text),
            ("question", SlotKind::Text),
            ("task_description", SlotKind::Text),
        ],
    },
    TemplateSpec {
        id: PromptId::PracticeAnswer,
        source: include_str!("../../prompts/prompt07.txt"),
        slots: &[("experience", SlotKind::Text), ("question", SlotKind::Text)],
    },
    TemplateSpec {
        id: PromptId::Verification,
        source: include_str!("../../prompts/prompt08.txt"),
        slots: &[
            ("reference", SlotKind::Text),
            ("question", SlotKind::Text),
            ("response", SlotKind::Text),
        ],
    },
    TemplateSpec {
        id: PromptId::ExperienceInduction,
        source: include_str!("../../prompts/prompt09.txt"),
        slots: &[
            ("correct", SlotKind::Records(EXAMPLE_FIELDS)),
            ("incorrect", SlotKind::Records(EXAMPLE_FIELDS)),
        ],
    },
    TemplateSpec {
        id: PromptId::ExperienceReasoning,
        source: include_str!("../../prompts/prompt10.txt"),
        slots: &[
            ("suggestions", SlotKind::List),
            ("procedure", SlotKind::List),
            ("question", SlotKind::Text),
        ],
    },
    TemplateSpec {
        id: PromptId::ExperienceGeneration,
        source: include_str!("../../prompts/prompt11.txt"),
        slots: &[("question", SlotKind::Text)],
    },
];

fn environment() -> &'static Environment<'static> {
    static ENV: OnceLock<Environment<'static>> = OnceLock::new();
    ENV.get_or_init(|| {
        let mut env = Environment::new();
        env.set_trim_blocks(true);
        env.set_lstrip_blocks(true);
        env.set_keep_trailing_newline(false);
        env.set_undefined_behavior(UndefinedBehavior::Strict);
        env.set_auto_escape_callback(|_| minijinja::AutoEscape::None);
        env.add_filter("json_list", |items: Vec<String>| {
            serde_json::to_string(&items).expect("string list serializes")
        });
        for spec in &TEMPLATES {
            env.add_template(spec.id.as_str(), spec.source)
                .expect("bundled templates parse");
        }
        env
    })
}

/// A rendered prompt ready to send.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub id: PromptId,
    pub text: String,
}

impl RenderedPrompt {
    /// Wraps text assembled outside the catalog (baseline prompts).
    pub fn raw(id: PromptId, text: impl Into<String>) -> Self {
        Self { id, text: text.into() }
    }
}

/// Renders catalog template `template` (1..=11) with `slots`.
pub fn render_prompt(template: u8, slots: &Slots) -> Result<RenderedPrompt, PromptError> {
    render(PromptId::from_number(template)?, slots)
}

pub fn render(id: PromptId, slots: &Slots) -> Result<RenderedPrompt, PromptError> {
    let number = id.number().ok_or(PromptError::UnknownName(id.as_str().to_string()))?;
    let spec = &TEMPLATES[number as usize - 1];
    validate(spec, slots)?;
    let tmpl = environment()
        .get_template(id.as_str())
        .map_err(|e| PromptError::Render { template: id, message: e.to_string() })?;
    let text = tmpl
        .render(Value::from_serialize(slots))
        .map_err(|e| PromptError::Render { template: id, message: e.to_string() })?;
    Ok(RenderedPrompt { id, text })
}

fn validate(spec: &TemplateSpec, slots: &Slots) -> Result<(), PromptError> {
    for (name, kind) in spec.slots {
        let value = slots.get(*name).ok_or_else(|| PromptError::MissingSlot {
            template: spec.id,
            slot: name.to_string(),
        })?;
        let shape_err = |expected| PromptError::SlotShape {
            template: spec.id,
            slot: name.to_string(),
            expected,
        };
        match (kind, value) {
            (SlotKind::Text, SlotValue::Text(_)) | (SlotKind::List, SlotValue::List(_)) => {}
            (SlotKind::Records(fields), SlotValue::Records(rows)) => {
                let ok = rows
                    .iter()
                    .all(|r| r.len() == fields.len() && fields.iter().all(|f| r.contains_key(*f)));
                if !ok {
                    return Err(shape_err("records with the declared fields"));
                }
            }
            (SlotKind::Text, _) => return Err(shape_err("text")),
            (SlotKind::List, _) => return Err(shape_err("a list of strings")),
            (SlotKind::Records(_), _) => return Err(shape_err("a list of records")),
        }
    }
    if let Some(extra) = slots.keys().find(|k| !spec.slots.iter().any(|(n, _)| n == k)) {
        return Err(PromptError::ExtraSlot {
            template: spec.id,
            slot: extra.clone(),
        });
    }
    Ok(())
}

fn text(s: &str) -> SlotValue {
    SlotValue::Text(s.to_string())
}

fn list<S: AsRef<str>>(items: &[S]) -> SlotValue {
    SlotValue::List(items.iter().map(|s| s.as_ref().to_string()).collect())
}

fn records(rows: impl IntoIterator<Item = [(&'static str, String); 2]>) -> SlotValue {
    SlotValue::Records(
        rows.into_iter()
            .map(|r| r.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
            .collect(),
    )
}

fn build(id: PromptId, slots: impl IntoIterator<Item = (&'static str, SlotValue)>) -> RenderedPrompt {
    let slots: Slots = slots.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    render(id, &slots).expect("typed prompt builders supply exactly the declared slots")
}

// Typed builders used by the pipeline and harness.

pub fn task_induction(question: &str) -> RenderedPrompt {
    build(PromptId::TaskInduction, [("user_question", text(question))])
}

pub fn task_match<S: AsRef<str>>(target: &str, candidates: &[S]) -> RenderedPrompt {
    build(
        PromptId::TaskMatch,
        [("target", text(target)), ("candidates", list(candidates))],
    )
}

pub fn source_selection<S: AsRef<str>>(target: &str, candidates: &[S]) -> RenderedPrompt {
    build(
        PromptId::SourceSelection,
        [("target", text(target)), ("candidates", list(candidates))],
    )
}

pub fn experience_transfer(target: &str, sources: &[(&str, &Experience)]) -> RenderedPrompt {
    let rows = sources
        .iter()
        .map(|(d, e)| [("description", d.to_string()), ("experience", e.render_text())]);
    build(
        PromptId::ExperienceTransfer,
        [("target", text(target)), ("sources", records(rows))],
    )
}

/// Merge prompt; `first` contributes "Task Processing Flow 1".
pub fn experience_merge(target: &str, first: &Experience, second: &Experience) -> RenderedPrompt {
    let suggestions: Vec<&String> = first.suggestions().iter().chain(second.suggestions()).collect();
    build(
        PromptId::ExperienceMerge,
        [
            ("target", text(target)),
            ("suggestions", list(&suggestions)),
            ("procedure_1", list(first.procedure())),
            ("procedure_2", list(second.procedure())),
        ],
    )
}

pub fn question_generation(reference: &str, question: &str, task_description: &str) -> RenderedPrompt {
    build(
        PromptId::QuestionGeneration,
        [
            ("reference", text(reference)),
            ("question", text(question)),
            ("task_description", text(task_description)),
        ],
    )
}

/// Practice answer; the experience block is dropped when `experience` is empty.
pub fn practice_answer(experience: &Experience, question: &str) -> RenderedPrompt {
    let exp = if experience.is_empty() {
        String::new()
    } else {
        experience.render_text()
    };
    build(
        PromptId::PracticeAnswer,
        [("experience", SlotValue::Text(exp)), ("question", text(question))],
    )
}

pub fn verification(reference: &str, question: &str, response: &str) -> RenderedPrompt {
    build(
        PromptId::Verification,
        [
            ("reference", text(reference)),
            ("question", text(question)),
            ("response", text(response)),
        ],
    )
}

pub fn experience_induction(correct: &[(&str, &str)], incorrect: &[(&str, &str)]) -> RenderedPrompt {
    let rows = |xs: &[(&str, &str)]| {
        records(
            xs.iter()
                .map(|(q, r)| [("question", q.to_string()), ("reasoning", r.to_string())])
                .collect::<Vec<_>>(),
        )
    };
    build(
        PromptId::ExperienceInduction,
        [("correct", rows(correct)), ("incorrect", rows(incorrect))],
    )
}

pub fn experience_reasoning(experience: &Experience, question: &str) -> RenderedPrompt {
    build(
        PromptId::ExperienceReasoning,
        [
            ("suggestions", list(experience.suggestions())),
            ("procedure", list(experience.procedure())),
            ("question", text(question)),
        ],
    )
}

pub fn experience_generation(question: &str) -> RenderedPrompt {
    build(PromptId::ExperienceGeneration, [("question", text(question))])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slots(pairs: &[(&str, SlotValue)]) -> Slots {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn numbers_round_trip() {
        for n in 1..=11u8 {
            assert_eq!(PromptId::from_number(n).unwrap().number(), Some(n));
        }
        assert_eq!(PromptId::from_number(12), Err(PromptError::UnknownTemplate(12)));
        assert_eq!(PromptId::from_number(0), Err(PromptError::UnknownTemplate(0)));
        assert_eq!(PromptId::ZeroShot.number(), None);
        for p in PromptId::ALL {
            assert_eq!(p.as_str().parse::<PromptId>().unwrap(), p);
        }
    }

    #[test]
    fn task_match_numbers_five_candidates() {
        let cands: Vec<String> = (1..=5).map(|i| format!("desc {i}")).collect();
        let p = task_match("target", &cands);
        assert!(p.text.contains("<Candidate Task 5>\ndesc 5\n</Candidate Task 5>"));
        assert!(!p.text.contains("<Candidate Task 6>"));
        assert!(p.text.contains("please return -1."));
    }

    #[test]
    fn practice_answer_omits_empty_experience() {
        let p = practice_answer(&Experience::empty(), "Q?");
        assert_eq!(
            p.text,
            "Q?\n\nPlease provide specific, detailed, and comprehensive steps of your thought."
        );
        let exp = Experience::new(vec!["s".into()], vec![]).unwrap();
        let p = practice_answer(&exp, "Q?");
        assert!(p.text.starts_with("<Task Experience>\n"));
        assert!(p.text.contains("Please refer to the above experience"));
    }

    #[test]
    fn missing_extra_and_misshapen_slots() {
        let err = render_prompt(1, &Slots::new()).unwrap_err();
        assert_eq!(
            err,
            PromptError::MissingSlot {
                template: PromptId::TaskInduction,
                slot: "user_question".into()
            }
        );
        assert!(err.to_string().contains("user_question"));

        let err = render_prompt(1, &slots(&[("user_question", "q".into()), ("bogus", "x".into())])).unwrap_err();
        assert!(matches!(err, PromptError::ExtraSlot { slot, .. } if slot == "bogus"));

        let err = render_prompt(2, &slots(&[("target", "t".into()), ("candidates", "oops".into())])).unwrap_err();
        assert!(matches!(err, PromptError::SlotShape { .. }));

        let bad_rows = SlotValue::Records(vec![BTreeMap::from([("question".to_string(), "q".to_string())])]);
        let err = render_prompt(9, &slots(&[("correct", bad_rows), ("incorrect", SlotValue::Records(vec![]))]))
            .unwrap_err();
        assert!(matches!(err, PromptError::SlotShape { .. }));

        assert!(matches!(render_prompt(42, &Slots::new()), Err(PromptError::UnknownTemplate(42))));
    }

    #[test]
    fn slot_values_are_not_reinterpreted() {
        let p = task_induction("{{ user_question }} {% raw %}");
        assert!(p.text.contains("<Task Example >\n{{ user_question }} {% raw %}\n</Task Example >"));
    }

    #[test]
    fn merge_lists_are_json_arrays() {
        let a = Experience::new(vec!["say \"why\"".into()], vec!["a1".into()]).unwrap();
        let b = Experience::new(vec!["b".into()], vec![]).unwrap();
        let p = experience_merge("T", &a, &b);
        assert!(p.text.contains(
            "\"How to better accomplish the task or avoid low-quality responses\":\n[\"say \\\"why\\\"\",\"b\"],\n\
             \"Task Processing Flow 1\": [\"a1\"],\n\"Task Processing Flow 2\": []\n</Existing Experience>"
        ));
    }

    #[test]
    fn no_template_ends_with_newline() {
        for n in 1..=11 {
            let spec = &TEMPLATES[n - 1];
            let slots: Slots = spec
                .slots
                .iter()
                .map(|(name, kind)| {
                    let v = match kind {
                        SlotKind::Text => SlotValue::Text("x".into()),
                        SlotKind::List => SlotValue::List(vec!["x".into()]),
                        SlotKind::Records(fields) => SlotValue::Records(vec![fields
                            .iter()
                            .map(|f| (f.to_string(), "x".to_string()))
                            .collect()]),
                    };
                    (name.to_string(), v)
                })
                .collect();
            let p = render(spec.id, &slots).unwrap();
            assert!(!p.text.ends_with('\n'), "{}", spec.id);
            assert!(!p.text.contains("{{") && !p.text.contains("{%"), "{}", spec.id);
        }
    }
}
