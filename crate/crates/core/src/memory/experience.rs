use serde::{Deserialize, Serialize};

/// Maximum number of entries in either experience list.
pub const MAX_INSIGHTS: usize = 20;

pub const SUGGESTIONS_HEADING: &str = "How to better accomplish the task or avoid low-quality responses";
pub const PROCEDURE_HEADING: &str = "The specific process for handling this task";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExperienceError {
    #[error("{list} holds {len} entries, limit is {MAX_INSIGHTS}")]
    TooLong { list: &'static str, len: usize },
    #[error("{list} entry {index} is blank")]
    Blank { list: &'static str, index: usize },
}

/// Textual task-solving experience: unordered suggestions plus an ordered procedure.
///
/// Both lists hold at most [`MAX_INSIGHTS`] non-blank entries. The empty value
/// is the initial experience of every freshly created task.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawExperience")]
pub struct Experience {
    suggestions: Vec<String>,
    procedure: Vec<String>,
}

#[derive(Deserialize)]
struct RawExperience {
    suggestions: Vec<String>,
    procedure: Vec<String>,
}

impl TryFrom<RawExperience> for Experience {
    type Error = ExperienceError;

    fn try_from(raw: RawExperience) -> Result<Self, Self::Error> {
        Experience::new(raw.suggestions, raw.procedure)
    }
}

impl Experience {
    pub fn new(suggestions: Vec<String>, procedure: Vec<String>) -> Result<Self, ExperienceError> {
        check_list("suggestions", &suggestions)?;
        check_list("procedure", &procedure)?;
        Ok(Self { suggestions, procedure })
    }

    /// Builds an experience from untrusted model output: entries are trimmed,
    /// blank ones dropped, and each list cut to the first [`MAX_INSIGHTS`].
    pub fn bounded<S, P>(suggestions: S, procedure: P) -> Self
    where
        S: IntoIterator,
        S::Item: AsRef<str>,
        P: IntoIterator,
        P::Item: AsRef<str>,
    {
        Self {
            suggestions: clean(suggestions),
            procedure: clean(procedure),
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.suggestions.is_empty() && self.procedure.is_empty()
    }

    pub fn suggestions(&self) -> &[String] {
        &self.suggestions
    }

    pub fn procedure(&self) -> &[String] {
        &self.procedure
    }

    /// Total number of insights across both lists.
    pub fn insight_count(&self) -> usize {
        self.suggestions.len() + self.procedure.len()
    }

    /// Text form used wherever experience is quoted inside a prompt.
    pub fn render_text(&self) -> String {
        let mut out = format!("[{SUGGESTIONS_HEADING}]:\n");
        for s in &self.suggestions {
            out.push_str("- ");
            out.push_str(s);
            out.push('\n');
        }
        out.push_str(&format!("[{PROCEDURE_HEADING}]:"));
        for (i, p) in self.procedure.iter().enumerate() {
            out.push_str(&format!("\n{}. {}", i + 1, p));
        }
        out
    }
}

fn check_list(list: &'static str, items: &[String]) -> Result<(), ExperienceError> {
    if items.len() > MAX_INSIGHTS {
        return Err(ExperienceError::TooLong { list, len: items.len() });
    }
    if let Some(index) = items.iter().position(|s| s.trim().is_empty()) {
        return Err(ExperienceError::Blank { list, index });
    }
    Ok(())
}

fn clean<I>(items: I) -> Vec<String>
where
    I: IntoIterator,
    I::Item: AsRef<str>,
{
    items
        .into_iter()
        .map(|s| s.as_ref().trim().to_string())
        .filter(|s| !s.is_empty())
        .take(MAX_INSIGHTS)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("insight {i}")).collect()
    }

    #[test]
    fn rejects_more_than_twenty() {
        let err = Experience::new(strings(21), vec![]).unwrap_err();
        assert_eq!(err, ExperienceError::TooLong { list: "suggestions", len: 21 });
        assert!(Experience::new(strings(20), strings(20)).is_ok());
    }

    #[test]
    fn rejects_blank_entries() {
        let err = Experience::new(vec![], vec!["a".into(), "  ".into()]).unwrap_err();
        assert_eq!(err, ExperienceError::Blank { list: "procedure", index: 1 });
    }

    #[test]
    fn bounded_trims_and_truncates() {
        let mut raw = strings(25);
        raw.insert(0, "   ".into());
        raw.insert(1, "  padded  ".into());
        let exp = Experience::bounded(&raw, ["x"]);
        assert_eq!(exp.suggestions().len(), 20);
        assert_eq!(exp.suggestions()[0], "padded");
        assert_eq!(exp.procedure(), ["x"]);
    }

    #[test]
    fn deserialize_validates() {
        let bad = serde_json::json!({"suggestions": strings(21), "procedure": []});
        assert!(serde_json::from_value::<Experience>(bad).is_err());
        let good = serde_json::json!({"suggestions": ["a"], "procedure": ["b"]});
        let exp: Experience = serde_json::from_value(good).unwrap();
        assert_eq!(exp.insight_count(), 2);
    }

    #[test]
    fn render_text_layout() {
        let exp = Experience::new(vec!["s1".into(), "s2".into()], vec!["p1".into()]).unwrap();
        assert_eq!(
            exp.render_text(),
            "[How to better accomplish the task or avoid low-quality responses]:\n- s1\n- s2\n\
             [The specific process for handling this task]:\n1. p1"
        );
    }
}
