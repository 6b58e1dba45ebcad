use serde::{Deserialize, Serialize};

use crate::corpus::{Document, DocumentSource};
use crate::llm::extract::{VerdictSchema, Verdict};
use crate::llm::{extract_tagged, prompt, Gateway};
use crate::memory::Experience;

pub const DEFAULT_PRACTICE_TARGET: usize = 5;
pub const DEFAULT_PRACTICE_ATTEMPT_CAP: usize = 15;
pub const DEFAULT_REFERENCE_DOCS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PracticeExample {
    pub question: String,
    pub reasoning: String,
    pub verdict: Verdict,
    pub doc_id: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PracticeOutcome {
    /// Kept examples (correct or wrong), in generation order.
    pub examples: Vec<PracticeExample>,
    /// Inconclusive verdicts thrown away.
    pub discarded: usize,
    /// Iterations that produced no verdict because a model call failed.
    pub failed: usize,
    pub attempts: usize,
    pub documents: usize,
    pub low_confidence_votes: usize,
    /// The target was not reached or no reference documents were available.
    pub degraded: bool,
    /// Every generated question, kept or not.
    pub questions: Vec<String>,
}

impl PracticeOutcome {
    pub fn incorrect(&self) -> usize {
        self.examples.iter().filter(|e| e.verdict == Verdict::Wrong).count()
    }

    pub fn correct(&self) -> impl Iterator<Item = &PracticeExample> {
        self.examples.iter().filter(|e| e.verdict == Verdict::Correct)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PracticeSettings {
    pub target_examples: usize,
    pub attempt_cap: usize,
    pub reference_docs: usize,
}

impl Default for PracticeSettings {
    fn default() -> Self {
        Self {
            target_examples: DEFAULT_PRACTICE_TARGET,
            attempt_cap: DEFAULT_PRACTICE_ATTEMPT_CAP,
            reference_docs: DEFAULT_REFERENCE_DOCS,
        }
    }
}

/// Generate, answer and self-verify practice questions for one user question.
///
/// Reference documents are fetched once and assigned to iterations in turn.
/// Each iteration generates a question from the current document, answers it
/// with `experience`, and votes on the verdict; inconclusive verdicts are
/// dropped. The loop ends at `target_examples` kept or after `attempt_cap`
/// iterations.
pub struct Practicer<'a> {
    pub gateway: &'a Gateway,
    pub corpus: &'a dyn DocumentSource,
    pub settings: PracticeSettings,
}

impl Practicer<'_> {
    pub fn run(&self, question: &str, task_description: &str, experience: &Experience) -> PracticeOutcome {
        let docs: Vec<Document> = match self.corpus.search(question, self.settings.reference_docs) {
            Ok(d) => d,
            Err(e) => {
                tracing::warn!(error = %e, "reference search failed; practising without references");
                Vec::new()
            }
        };
        let mut out = PracticeOutcome {
            documents: docs.len(),
            degraded: docs.is_empty(),
            ..Default::default()
        };
        while out.examples.len() < self.settings.target_examples && out.attempts < self.settings.attempt_cap {
            let doc = (!docs.is_empty()).then(|| &docs[out.attempts % docs.len()]);
            out.attempts += 1;
            let reference = doc.map_or("", |d| d.text.as_str());
            match self.iteration(reference, question, task_description, experience, &mut out) {
                Some(example) if example.verdict == Verdict::Inconclusive => out.discarded += 1,
                Some(mut example) => {
                    example.doc_id = doc.map(|d| d.doc_id.clone());
                    out.examples.push(example);
                }
                None => out.failed += 1,
            }
        }
        if out.examples.len() < self.settings.target_examples {
            out.degraded = true;
        }
        out
    }

    fn iteration(
        &self,
        reference: &str,
        question: &str,
        task_description: &str,
        experience: &Experience,
        out: &mut PracticeOutcome,
    ) -> Option<PracticeExample> {
        let gen = prompt::question_generation(reference, question, task_description);
        let new_question = self
            .gateway
            .call_with(&gen, |raw| extract_tagged(raw, "New Question").ok_or_else(|| "missing <New Question> block".to_string()))
            .map_err(|e| tracing::warn!(error = %e, "practice question generation failed"))
            .ok()?;
        out.questions.push(new_question.clone());
        let reasoning = self
            .gateway
            .call(&prompt::practice_answer(experience, &new_question))
            .map_err(|e| tracing::warn!(error = %e, "practice answer failed"))
            .ok()?;
        let vote = self
            .gateway
            .vote(&prompt::verification(reference, &new_question, &reasoning), &VerdictSchema)
            .map_err(|e| tracing::warn!(error = %e, "practice verification failed"))
            .ok()?;
        if vote.low_confidence {
            out.low_confidence_votes += 1;
        }
        Some(PracticeExample {
            question: new_question,
            reasoning,
            verdict: vote.value,
            doc_id: None,
        })
    }
}
