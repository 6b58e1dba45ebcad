//! Baseline methods compared against the learning agent.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::corpus::DocumentSource;
use crate::llm::extract::{ExperienceSchema, TaskInductionSchema, Verdict};
use crate::llm::{extract_tagged, prompt, Gateway, LlmError, PromptId, RenderedPrompt};
use crate::memory::Experience;
use crate::pipeline::{PracticeSettings, Practicer, UserQuestion};

pub const COT_SUFFIX: &str = "\nLet's think step by step";
pub const DEFAULT_DEMONSTRATIONS: usize = 3;
pub const DEFAULT_NEIGHBOURS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SeGpt,
    ZeroShot,
    ZeroShotCot,
    SelfExp,
    SelfIcl,
    SelfIclCot,
    ModifiedSelfIcl,
    AutopIcl,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::SeGpt,
        Method::ZeroShot,
        Method::ZeroShotCot,
        Method::SelfExp,
        Method::SelfIcl,
        Method::SelfIclCot,
        Method::ModifiedSelfIcl,
        Method::AutopIcl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::SeGpt => "se_gpt",
            Method::ZeroShot => "zero_shot",
            Method::ZeroShotCot => "zero_shot_cot",
            Method::SelfExp => "self_exp",
            Method::SelfIcl => "self_icl",
            Method::SelfIclCot => "self_icl_cot",
            Method::ModifiedSelfIcl => "modified_self_icl",
            Method::AutopIcl => "autop_icl",
        }
    }

    /// Methods whose questions depend on earlier ones and must run in order.
    pub fn is_sequential(self) -> bool {
        matches!(self, Method::SeGpt | Method::ModifiedSelfIcl)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| HarnessError::Invalid(format!("unknown method {s:?}")))
    }
}

/// A question with the response used as its demonstration answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub question: String,
    pub response: String,
}

/// Final answer plus whatever the method produced on the way.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineTrace {
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experience: Option<Experience>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub demonstrations: Vec<Demonstration>,
}

pub fn zero_shot_prompt(question: &str) -> RenderedPrompt {
    RenderedPrompt::raw(PromptId::ZeroShot, question)
}

pub fn zero_shot_cot_prompt(question: &str) -> RenderedPrompt {
    RenderedPrompt::raw(PromptId::ZeroShotCot, format!("{question}{COT_SUFFIX}"))
}

/// Asks for `n` new instances shaped like `question`, each in a
/// `<New Instance i>` block.
pub fn self_icl_generate_prompt(question: &str, n: usize) -> RenderedPrompt {
    RenderedPrompt::raw(
        PromptId::SelfIclGenerate,
        format!(
            "Following is an example instance of a task. Please come up with {n} new, diverse, and creative instances of the same task. \
             Keep the format of the example instance, including its answer options and output format.\n\
             <Instance>\n{question}\n</Instance>\n\n\
             Write each new instance inside its own numbered block, from <New Instance 1> to <New Instance {n}>, for example:\n\
             <New Instance 1>\n[instance text]\n</New Instance 1>"
        ),
    )
}

/// Zero-shot pseudo-labelling of a generated or retrieved instance.
pub fn self_icl_label_prompt(instance: &str, cot: bool) -> RenderedPrompt {
    let suffix = if cot { COT_SUFFIX } else { "" };
    RenderedPrompt::raw(PromptId::SelfIclLabel, format!("{instance}{suffix}"))
}

/// In-context answer with demonstrations ahead of the input question.
pub fn icl_answer_prompt(demonstrations: &[Demonstration], question: &str, cot: bool) -> RenderedPrompt {
    let mut text = String::new();
    for (i, d) in demonstrations.iter().enumerate() {
        let n = i + 1;
        text += &format!("<Example {n}>\n{}\n\n{}\n</Example {n}>\n\n", d.question, d.response);
    }
    text += question;
    if cot {
        text += COT_SUFFIX;
    }
    RenderedPrompt::raw(PromptId::IclAnswer, text)
}

/// Pulls the `<New Instance i>` blocks out of a generation reply, in order,
/// stopping at the first missing index.
pub fn parse_instances(raw: &str, n: usize) -> Vec<String> {
    (1..=n)
        .map_while(|i| extract_tagged(raw, &format!("New Instance {i}")))
        .filter(|s| !s.trim().is_empty())
        .collect()
}

/// Runs the baselines that need no shared state beyond the gateway.
pub struct Baselines<'a> {
    pub gateway: &'a Gateway,
    pub corpus: &'a dyn DocumentSource,
    pub practice: PracticeSettings,
    pub demonstrations: usize,
}

impl Baselines<'_> {
    pub fn run(&self, method: Method, question: &UserQuestion) -> Result<BaselineTrace, HarnessError> {
        let q = question.text.as_str();
        match method {
            Method::ZeroShot => self.answer(&zero_shot_prompt(q)),
            Method::ZeroShotCot => self.answer(&zero_shot_cot_prompt(q)),
            Method::SelfExp => {
                let experience = self.gateway.call_parsed(&prompt::experience_generation(q), &ExperienceSchema)?;
                let answer = self.gateway.call(&prompt::experience_reasoning(&experience, q))?;
                Ok(BaselineTrace {
                    answer,
                    experience: Some(experience),
                    demonstrations: Vec::new(),
                })
            }
            Method::SelfIcl | Method::SelfIclCot => self.self_icl(q, method == Method::SelfIclCot),
            Method::AutopIcl => self.autop_icl(q),
            Method::SeGpt | Method::ModifiedSelfIcl => Err(HarnessError::Invalid(format!(
                "{method} keeps state across questions and is run by the experiment loop"
            ))),
        }
    }

    fn answer(&self, p: &RenderedPrompt) -> Result<BaselineTrace, HarnessError> {
        Ok(BaselineTrace {
            answer: self.gateway.call(p)?,
            ..Default::default()
        })
    }

    fn self_icl(&self, q: &str, cot: bool) -> Result<BaselineTrace, HarnessError> {
        let instances = match self.gateway.call(&self_icl_generate_prompt(q, self.demonstrations)) {
            Ok(raw) => parse_instances(&raw, self.demonstrations),
            Err(e) => {
                tracing::warn!(error = %e, "demonstration generation failed");
                Vec::new()
            }
        };
        let demonstrations = instances
            .into_iter()
            .filter_map(|instance| pseudo_label(self.gateway, &instance, cot))
            .collect::<Vec<_>>();
        let answer = self.gateway.call(&icl_answer_prompt(&demonstrations, q, cot))?;
        Ok(BaselineTrace {
            answer,
            experience: None,
            demonstrations,
        })
    }

    fn autop_icl(&self, q: &str) -> Result<BaselineTrace, HarnessError> {
        let description = match self.gateway.call_parsed(&prompt::task_induction(q), &TaskInductionSchema) {
            Ok(draft) => draft.description,
            Err(e) => {
                tracing::warn!(error = %e, "task description unavailable for practice");
                String::new()
            }
        };
        let practicer = Practicer {
            gateway: self.gateway,
            corpus: self.corpus,
            settings: self.practice,
        };
        let outcome = practicer.run(q, &description, &Experience::empty());
        let demonstrations: Vec<Demonstration> = outcome
            .examples
            .into_iter()
            .filter(|e| e.verdict == Verdict::Correct)
            .map(|e| Demonstration {
                question: e.question,
                response: e.reasoning,
            })
            .collect();
        let answer = self.gateway.call(&icl_answer_prompt(&demonstrations, q, false))?;
        Ok(BaselineTrace {
            answer,
            experience: None,
            demonstrations,
        })
    }
}

fn pseudo_label(gateway: &Gateway, instance: &str, cot: bool) -> Option<Demonstration> {
    match gateway.call(&self_icl_label_prompt(instance, cot)) {
        Ok(response) => Some(Demonstration {
            question: instance.to_string(),
            response,
        }),
        Err(e) => {
            tracing::warn!(error = %e, "pseudo-labelling failed; demonstration dropped");
            None
        }
    }
}

/// Pseudo-labels of stream questions, computed once per question id.
#[derive(Default)]
pub struct PseudoLabels {
    cache: Mutex<HashMap<String, Option<String>>>,
}

impl PseudoLabels {
    pub fn get(&self, gateway: &Gateway, question: &UserQuestion) -> Option<Demonstration> {
        if let Some(hit) = self.cache.lock().unwrap().get(&question.question_id) {
            return hit.clone().map(|response| Demonstration {
                question: question.text.clone(),
                response,
            });
        }
        let d = pseudo_label(gateway, &question.text, false);
        self.cache
            .lock()
            .unwrap()
            .insert(question.question_id.clone(), d.as_ref().map(|d| d.response.clone()));
        d
    }
}

/// Self-ICL with retrieved stream neighbours in place of generated ones.
pub fn modified_self_icl(
    gateway: &Gateway,
    question: &UserQuestion,
    neighbours: &[&UserQuestion],
    labels: &PseudoLabels,
) -> Result<BaselineTrace, LlmError> {
    let demonstrations: Vec<Demonstration> = neighbours.iter().filter_map(|n| labels.get(gateway, n)).collect();
    let answer = gateway.call(&icl_answer_prompt(&demonstrations, &question.text, false))?;
    Ok(BaselineTrace {
        answer,
        experience: None,
        demonstrations,
    })
}
