use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::prompt::PromptId;
use crate::http::{HttpError, JsonClient, RetryPolicy};

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("chat request failed: {0}")]
    Http(#[from] HttpError),
    #[error("scripted transcript exhausted at {0}")]
    TranscriptExhausted(PromptId),
    #[error("malformed backend response: {0}")]
    BadResponse(String),
    #[error("{prompt}: no usable output after {attempts} attempts: {last}")]
    Malformed {
        prompt: PromptId,
        attempts: u32,
        last: String,
    },
    #[error("{0}")]
    Other(String),
}

impl LlmError {
    /// Attempts spent on a request that ultimately failed.
    pub fn attempts(&self) -> u32 {
        match self {
            LlmError::Http(HttpError::Exhausted { attempts, .. }) => *attempts,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub prompt_id: PromptId,
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: Option<u32>,
}

/// Token usage of one model invocation, summed over its transport attempts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub template_id: PromptId,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub attempt_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: UsageRecord,
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError>;
}

/// Whitespace token count used by offline backends.
pub fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

fn offline_completion(request: &ChatRequest, text: String) -> Completion {
    Completion {
        usage: UsageRecord {
            template_id: request.prompt_id,
            input_tokens: approx_tokens(&request.prompt),
            output_tokens: approx_tokens(&text),
            attempt_count: 1,
        },
        text,
    }
}

/// Transcript file layout for [`ScriptedBackend::from_json`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Transcript {
    #[serde(default)]
    pub default: Vec<String>,
    #[serde(default)]
    pub by_template: BTreeMap<PromptId, Vec<String>>,
}

struct Script {
    default: VecDeque<String>,
    keyed: BTreeMap<PromptId, VecDeque<String>>,
    requests: Vec<ChatRequest>,
}

/// Replays canned responses in order.
///
/// A request for prompt `p` is served from the queue keyed by `p` when that
/// queue still has entries, otherwise from the shared default queue. Running
/// out of responses is an error.
pub struct ScriptedBackend {
    script: Mutex<Script>,
}

impl ScriptedBackend {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            script: Mutex::new(Script {
                default: responses.into_iter().map(Into::into).collect(),
                keyed: BTreeMap::new(),
                requests: Vec::new(),
            }),
        }
    }

    pub fn with_template<I, S>(self, id: PromptId, responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.script
            .lock()
            .unwrap()
            .keyed
            .entry(id)
            .or_default()
            .extend(responses.into_iter().map(Into::into));
        self
    }

    pub fn from_transcript(t: Transcript) -> Self {
        let mut backend = Self::new(t.default);
        for (id, responses) in t.by_template {
            backend = backend.with_template(id, responses);
        }
        backend
    }

    /// Requests received so far, in order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.script.lock().unwrap().requests.clone()
    }

    pub fn remaining(&self) -> usize {
        let s = self.script.lock().unwrap();
        s.default.len() + s.keyed.values().map(VecDeque::len).sum::<usize>()
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        let mut s = self.script.lock().unwrap();
        s.requests.push(request.clone());
        let keyed = s.keyed.get_mut(&request.prompt_id).and_then(VecDeque::pop_front);
        let text = match keyed {
            Some(t) => t,
            None => s
                .default
                .pop_front()
                .ok_or(LlmError::TranscriptExhausted(request.prompt_id))?,
        };
        Ok(offline_completion(request, text))
    }
}

/// Backend whose replies come from a closure; useful for rule-based fixtures.
pub struct FnBackend<F> {
    respond: Mutex<F>,
}

impl<F> FnBackend<F>
where
    F: FnMut(&ChatRequest) -> Result<String, LlmError> + Send,
{
    pub fn new(respond: F) -> Self {
        Self {
            respond: Mutex::new(respond),
        }
    }
}

impl<F> LlmBackend for FnBackend<F>
where
    F: FnMut(&ChatRequest) -> Result<String, LlmError> + Send,
{
    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        let text = (self.respond.lock().unwrap())(request)?;
        Ok(offline_completion(request, text))
    }
}

/// OpenAI-compatible chat-completions backend.
///
/// ```text
/// POST {base_url}/chat/completions
/// {"model": "...", "temperature": 1.0, "messages": [{"role": "user", "content": "..."}]}
/// ```
///
/// Reported `usage.prompt_tokens` / `usage.completion_tokens` feed the usage
/// record. Transport failures, 429 and 5xx are retried with backoff.
pub struct OpenAiBackend {
    client: JsonClient,
    url: String,
    model: String,
    api_key: String,
}

impl OpenAiBackend {
    pub fn new(base_url: &str, model: &str, api_key: String, retry: RetryPolicy, timeout: Duration) -> Self {
        Self {
            client: JsonClient::new(retry, timeout),
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl LlmBackend for OpenAiBackend {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        let mut body = json!({
            "model": self.model,
            "temperature": request.temperature,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        if let Some(max) = request.max_output_tokens {
            body["max_tokens"] = json!(max);
        }
        let reply = self.client.post(&self.url, Some(&self.api_key), &body)?;
        let parsed: ChatResponse =
            serde_json::from_value(reply.body).map_err(|e| LlmError::BadResponse(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::BadResponse("no message content".into()))?;
        let (input, output) = parsed
            .usage
            .map(|u| (u.prompt_tokens, u.completion_tokens))
            .unwrap_or((0, 0));
        Ok(Completion {
            text,
            usage: UsageRecord {
                template_id: request.prompt_id,
                input_tokens: input,
                output_tokens: output,
                attempt_count: reply.attempts,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::stub::StubServer;

    fn req(id: PromptId) -> ChatRequest {
        ChatRequest {
            prompt_id: id,
            prompt: "two words".into(),
            temperature: 1.0,
            max_output_tokens: None,
        }
    }

    #[test]
    fn scripted_serves_in_order_then_errors() {
        let b = ScriptedBackend::new(["hello"]);
        let c = b.complete(&req(PromptId::ZeroShot)).unwrap();
        assert_eq!(c.text, "hello");
        assert_eq!(c.usage.attempt_count, 1);
        assert_eq!(c.usage.input_tokens, 2);
        assert_eq!(c.usage.output_tokens, 1);
        assert!(matches!(
            b.complete(&req(PromptId::ZeroShot)),
            Err(LlmError::TranscriptExhausted(PromptId::ZeroShot))
        ));
        let empty = ScriptedBackend::new(Vec::<String>::new());
        assert!(empty.complete(&req(PromptId::TaskInduction)).is_err());
    }

    #[test]
    fn keyed_queues_take_precedence() {
        let b = ScriptedBackend::new(["d1", "d2"]).with_template(PromptId::Verification, ["v1"]);
        assert_eq!(b.complete(&req(PromptId::TaskMatch)).unwrap().text, "d1");
        assert_eq!(b.complete(&req(PromptId::Verification)).unwrap().text, "v1");
        assert_eq!(b.complete(&req(PromptId::Verification)).unwrap().text, "d2");
        assert_eq!(b.remaining(), 0);
        assert_eq!(b.requests().len(), 3);
    }

    #[test]
    fn transcript_json_shape() {
        let t: Transcript = serde_json::from_str(r#"{"default":["a"],"by_template":{"prompt8":["v"]}}"#).unwrap();
        let b = ScriptedBackend::from_transcript(t);
        assert_eq!(b.complete(&req(PromptId::Verification)).unwrap().text, "v");
        assert_eq!(b.complete(&req(PromptId::Verification)).unwrap().text, "a");
    }

    #[test]
    fn openai_backend_retries_500_then_succeeds() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"B"}}],"usage":{"prompt_tokens":12,"completion_tokens":3}}"#;
        let server = StubServer::start(vec![(500, "{}".into()), (200, ok.into())]);
        let retry = RetryPolicy {
            max_attempts: 4,
            base_delay: Duration::from_millis(1),
            max_delay: Duration::from_millis(2),
        };
        let b = OpenAiBackend::new(&server.url, "gpt-x", "secret".into(), retry, Duration::from_secs(5));
        let c = b.complete(&req(PromptId::ZeroShot)).unwrap();
        assert_eq!(c.text, "B");
        assert_eq!(c.usage.attempt_count, 2);
        assert_eq!((c.usage.input_tokens, c.usage.output_tokens), (12, 3));
        let seen = server.join();
        assert!(seen[1].starts_with("POST /chat/completions"));
        assert!(seen[1].contains(r#""temperature":1.0"#));
    }
}
