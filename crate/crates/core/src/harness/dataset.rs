//! Dataset adapters and stream mixing.
//!
//! Each dataset is a JSON-lines file. Fields per adapter (extra fields are
//! ignored; `id` is optional everywhere and defaults to the line number):
//!
//! | adapter      | fields                                                         | gold label |
//! |--------------|----------------------------------------------------------------|------------|
//! | `mmlu`       | `question`, `choices` (2..=26 strings), `answer` (index or letter) | letter |
//! | `ecare`      | `premise`, `ask-for` (`cause`/`effect`), `hypothesis1`, `hypothesis2`, `label` (0/1) | A/B |
//! | `socialiqa`  | `context`, `question`, `answerA`, `answerB`, `answerC`, `label` (1..=3) | A/B/C |
//! | `winogrande` | `sentence`, `option1`, `option2`, `answer` (1/2)               | A/B |
//! | `help`       | `premise`, `hypothesis`, `label` (entailment/neutral/contradiction or Yes/Neutral/No) | Yes/Neutral/No |
//! | `logiqa2`    | `text`, `question`, `options`, `answer` (index or letter)       | letter |
//! | `generic`    | `text` (already formatted), `label`, optional `answer_key`      | as given |

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::HarnessError;
use crate::pipeline::UserQuestion;

pub const OPTION_KEY: &str = "correct option ID";
pub const CHOICE_KEY: &str = "correct choice ID";
pub const ANSWER_KEY: &str = "answer";

/// A question together with the label used to score it. The label never
/// leaves the harness: only `question` is handed to a method.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledQuestion {
    pub question: UserQuestion,
    pub gold_label: String,
    /// JSON key the answer is expected under.
    pub answer_key: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mmlu,
    Ecare,
    Socialiqa,
    Winogrande,
    Help,
    Logiqa2,
    Generic,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 7] = [
        DatasetKind::Mmlu,
        DatasetKind::Ecare,
        DatasetKind::Socialiqa,
        DatasetKind::Winogrande,
        DatasetKind::Help,
        DatasetKind::Logiqa2,
        DatasetKind::Generic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Mmlu => "mmlu",
            DatasetKind::Ecare => "ecare",
            DatasetKind::Socialiqa => "socialiqa",
            DatasetKind::Winogrande => "winogrande",
            DatasetKind::Help => "help",
            DatasetKind::Logiqa2 => "logiqa2",
            DatasetKind::Generic => "generic",
        }
    }

    /// Converts one raw record into question text, gold label and answer key.
    pub fn convert(self, record: &Value) -> Result<(String, String, String), String> {
        match self {
            DatasetKind::Mmlu => {
                let question = str_field(record, "question")?;
                let choices = str_list(record, "choices")?;
                let gold = letter_answer(record.get("answer"), choices.len(), 0)?;
                let mut text = format!("Question: {question}\n");
                text += &options("Option", &choices);
                text += &format!("Choose the correct answer to the question from the {} options.\n", count_word(choices.len()));
                text += &format_block(OPTION_KEY, &one_of(choices.len()));
                Ok((text, gold, OPTION_KEY.into()))
            }
            DatasetKind::Ecare => {
                let premise = str_field(record, "premise")?;
                let ask = record
                    .get("ask-for")
                    .or_else(|| record.get("ask_for"))
                    .and_then(Value::as_str)
                    .ok_or("missing string field `ask-for`")?;
                let relation = match ask {
                    "cause" => "more likely to cause the occurrence of the premise",
                    "effect" => "more likely to be the result of the premise",
                    other => return Err(format!("`ask-for` must be cause or effect, got {other:?}")),
                };
                let choices = vec![str_field(record, "hypothesis1")?, str_field(record, "hypothesis2")?];
                let gold = letter_answer(record.get("label"), 2, 0)?;
                let mut text = format!("Premise: {premise}\n");
                text += &options("Choice", &choices);
                text += &format!("For the given two options, choose the one that is {relation}.\n");
                text += &format_block(CHOICE_KEY, &one_of(2));
                Ok((text, gold, CHOICE_KEY.into()))
            }
            DatasetKind::Socialiqa => {
                let context = str_field(record, "context")?;
                let question = str_field(record, "question")?;
                let choices = vec![
                    str_field(record, "answerA")?,
                    str_field(record, "answerB")?,
                    str_field(record, "answerC")?,
                ];
                let gold = letter_answer(record.get("label"), 3, 1)?;
                let mut text = format!("Context: {context}\nQuestion: {question}\n");
                text += &options("Option", &choices);
                text += "Based on the given context, choose the correct answer to the question from the three options.\n";
                text += &format_block(OPTION_KEY, &one_of(3));
                Ok((text, gold, OPTION_KEY.into()))
            }
            DatasetKind::Winogrande => {
                let sentence = str_field(record, "sentence")?;
                let choices = vec![str_field(record, "option1")?, str_field(record, "option2")?];
                let gold = letter_answer(record.get("answer"), 2, 1)?;
                let mut text = format!("Sentence: {sentence}\n");
                text += &options("Option", &choices);
                text += "Choose the more appropriate option to fill in the blank space in the given sentence.\n";
                text += &format_block(OPTION_KEY, &one_of(2));
                Ok((text, gold, OPTION_KEY.into()))
            }
            DatasetKind::Help => {
                let premise = str_field(record, "premise")?;
                let hypothesis = str_field(record, "hypothesis")?;
                let raw = str_field(record, "label")?;
                let gold = match raw.to_ascii_lowercase().as_str() {
                    "entailment" | "yes" => "Yes",
                    "neutral" => "Neutral",
                    "contradiction" | "no" => "No",
                    other => return Err(format!("unknown entailment label {other:?}")),
                };
                let text = format!(
                    "Premise: {premise}\nHypothesis: {hypothesis}\n\
                     You need to decide whether the hypothesis is entailed by the premise by choosing one of the following answers:\n\
                     \"Yes\": The hypothesis follows logically from the information contained in the premise.\n\
                     \"No\": The hypothesis is logically false from the information contained in the premise.\n\
                     \"Neutral\": It is not possible to determine whether the hypothesis is true or false without further information.\n{}",
                    format_block(ANSWER_KEY, "Yes, No or Neutral")
                );
                Ok((text, gold.into(), ANSWER_KEY.into()))
            }
            DatasetKind::Logiqa2 => {
                let context = str_field(record, "text")?;
                let question = str_field(record, "question")?;
                let choices = str_list(record, "options")?;
                let gold = letter_answer(record.get("answer"), choices.len(), 0)?;
                let mut text = format!("Context: {context}\nQuestion: {question}\n");
                text += &options("Option", &choices);
                text += &format!(
                    "Based on the given context, choose the correct answer to the question from the {} options.\n",
                    count_word(choices.len())
                );
                text += &format_block(OPTION_KEY, &one_of(choices.len()));
                Ok((text, gold, OPTION_KEY.into()))
            }
            DatasetKind::Generic => {
                let text = str_field(record, "text")?;
                let gold = match record.get("label") {
                    Some(Value::String(s)) if !s.trim().is_empty() => s.trim().to_string(),
                    Some(Value::Number(n)) => n.to_string(),
                    _ => return Err("missing non-empty `label`".into()),
                };
                let key = match record.get("answer_key") {
                    None | Some(Value::Null) => OPTION_KEY.to_string(),
                    Some(Value::String(s)) => s.clone(),
                    Some(_) => return Err("`answer_key` must be a string".into()),
                };
                Ok((text, gold, key))
            }
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DatasetKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| HarnessError::Invalid(format!("unknown dataset adapter {s:?}")))
    }
}

/// A loaded dataset: its tag and every record in file order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub id: String,
    pub records: Vec<LabeledQuestion>,
}

impl Dataset {
    /// Parses JSON-lines `text`. Question ids are `<dataset id>:<record id>`.
    pub fn parse(id: &str, kind: DatasetKind, text: &str) -> Result<Self, HarnessError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| HarnessError::Record {
                dataset: id.to_string(),
                line: i + 1,
                message,
            };
            let value: Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            let (text, gold_label, answer_key) = kind.convert(&value).map_err(bad)?;
            let record_id = match value.get("id") {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Number(n)) => n.to_string(),
                _ => (i + 1).to_string(),
            };
            let mut question = UserQuestion::new(format!("{id}:{record_id}"), text);
            question.dataset_tag = Some(id.to_string());
            records.push(LabeledQuestion {
                question,
                gold_label,
                answer_key,
            });
        }
        Ok(Self { id: id.to_string(), records })
    }

    pub fn load(id: &str, kind: DatasetKind, path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(id, kind, &text)
    }
}

/// Draws `k` records from each dataset and shuffles them together. The
/// result depends only on the inputs and `seed`.
pub fn load_and_mix(datasets: &[Dataset], k: usize, seed: u64) -> Result<Vec<LabeledQuestion>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stream = Vec::with_capacity(k * datasets.len());
    for d in datasets {
        if d.records.len() < k {
            return Err(HarnessError::InsufficientRecords {
                dataset: d.id.clone(),
                have: d.records.len(),
                need: k,
            });
        }
        let mut picked = rand::seq::index::sample(&mut rng, d.records.len(), k).into_vec();
        picked.sort_unstable();
        stream.extend(picked.into_iter().map(|i| d.records[i].clone()));
    }
    stream.shuffle(&mut rng);
    Ok(stream)
}

fn str_field(record: &Value, key: &str) -> Result<String, String> {
    record
        .get(key)
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| format!("missing string field `{key}`"))
}

fn str_list(record: &Value, key: &str) -> Result<Vec<String>, String> {
    let items = record
        .get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| format!("missing list field `{key}`"))?;
    let out: Vec<String> = items
        .iter()
        .map(|v| v.as_str().map(str::to_string).ok_or_else(|| format!("`{key}` entries must be strings")))
        .collect::<Result<_, _>>()?;
    if !(2..=26).contains(&out.len()) {
        return Err(format!("`{key}` must hold 2 to 26 options, got {}", out.len()));
    }
    Ok(out)
}

fn letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

/// Gold letter from an index (offset by `base`) or a letter.
fn letter_answer(v: Option<&Value>, n: usize, base: usize) -> Result<String, String> {
    let index = match v {
        Some(Value::Number(num)) => num.as_u64().map(|x| x as usize),
        Some(Value::String(s)) => {
            let s = s.trim();
            match s.parse::<usize>() {
                Ok(x) => Some(x),
                Err(_) => {
                    let c = s.chars().next().filter(|_| s.len() == 1).map(|c| c.to_ascii_uppercase());
                    c.filter(char::is_ascii_uppercase).map(|c| (c as u8 - b'A') as usize + base)
                }
            }
        }
        _ => None,
    };
    let index = index.ok_or("missing or unreadable answer")?;
    match index.checked_sub(base) {
        Some(i) if i < n => Ok(letter(i).to_string()),
        _ => Err(format!("answer {index} out of range for {n} options")),
    }
}

fn options(prefix: &str, choices: &[String]) -> String {
    choices
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{prefix} {}: {c}\n", letter(i)))
        .collect()
}

fn one_of(n: usize) -> String {
    let labels: Vec<String> = (0..n).map(|i| letter(i).to_string()).collect();
    format!("one of {}", labels.join(", "))
}

fn count_word(n: usize) -> String {
    match n {
        2 => "two".into(),
        3 => "three".into(),
        4 => "four".into(),
        5 => "five".into(),
        _ => n.to_string(),
    }
}

fn format_block(key: &str, hint: &str) -> String {
    format!("Use the following JSON format to output your answer:\n```json\n{{\n  \"{key}\": /* {hint} */\n}}\n```")
}
