//! Blocking JSON-over-HTTP with bounded exponential backoff.
//!
//! Transport failures, HTTP 429 and 5xx responses are retried; any other
//! status fails immediately.

use std::time::Duration;

use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn delay_for(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.saturating_sub(1));
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HttpError {
    #[error("HTTP {status} from {url}: {body}")]
    Status { url: String, status: u16, body: String },
    #[error("transport error calling {url}: {message}")]
    Transport { url: String, message: String },
    #[error("invalid JSON from {url}: {message}")]
    Decode { url: String, message: String },
    #[error("gave up on {url} after {attempts} attempts: {last}")]
    Exhausted { url: String, attempts: u32, last: Box<HttpError> },
}

impl HttpError {
    fn retryable(&self) -> bool {
        match self {
            HttpError::Status { status, .. } => *status == 429 || *status >= 500,
            HttpError::Transport { .. } => true,
            HttpError::Decode { .. } | HttpError::Exhausted { .. } => false,
        }
    }
}

/// Successful response plus the number of attempts it took.
#[derive(Debug)]
pub struct Reply {
    pub body: Value,
    pub attempts: u32,
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl JsonClient {
    pub fn new(retry: RetryPolicy, timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Self { agent, retry }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        self.retry
    }

    pub fn post(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<Reply, HttpError> {
        self.with_retry(url, || {
            let mut req = self.agent.post(url).set("Content-Type", "application/json");
            if let Some(token) = bearer {
                req = req.set("Authorization", &format!("Bearer {token}"));
            }
            req.send_json(body.clone())
        })
    }

    pub fn get(&self, url: &str, query: &[(&str, &str)]) -> Result<Reply, HttpError> {
        self.with_retry(url, || {
            let mut req = self.agent.get(url).set("User-Agent", "segpt/0.1");
            for (k, v) in query {
                req = req.query(k, v);
            }
            req.call()
        })
    }

    fn with_retry<F>(&self, url: &str, mut send: F) -> Result<Reply, HttpError>
    where
        F: FnMut() -> Result<ureq::Response, ureq::Error>,
    {
        let max = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let err = match send() {
                Ok(resp) => {
                    return resp
                        .into_json::<Value>()
                        .map(|body| Reply { body, attempts: attempt })
                        .map_err(|e| HttpError::Decode { url: url.to_string(), message: e.to_string() });
                }
                Err(ureq::Error::Status(status, resp)) => HttpError::Status {
                    url: url.to_string(),
                    status,
                    body: resp.into_string().unwrap_or_default(),
                },
                Err(ureq::Error::Transport(t)) => HttpError::Transport {
                    url: url.to_string(),
                    message: t.to_string(),
                },
            };
            if !err.retryable() {
                return Err(err);
            }
            if attempt >= max {
                return Err(HttpError::Exhausted {
                    url: url.to_string(),
                    attempts: attempt,
                    last: Box::new(err),
                });
            }
            tracing::warn!(attempt, url, error = %err, "retrying request");
            std::thread::sleep(self.retry.delay_for(attempt));
        }
    }
}
