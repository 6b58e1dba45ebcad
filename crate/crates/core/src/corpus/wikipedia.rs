use std::sync::Arc;
use std::time::Duration;

use serde_json::Value;

use super::{CorpusError, Document, DocumentSource, Tokenizer, WordPunctTokenizer, DEFAULT_TOKEN_LIMIT};
use crate::http::{JsonClient, RetryPolicy};

pub const WIKIPEDIA_API: &str = "https://en.wikipedia.org/w/api.php";

/// Longest query sent to the search endpoint, in characters.
pub const MAX_QUERY_CHARS: usize = 300;

/// Live Wikipedia source using the MediaWiki action API.
///
/// ```text
/// GET {api}?action=query&list=search&srsearch=<query>&srlimit=<k>&format=json
/// GET {api}?action=query&prop=extracts&explaintext=1&pageids=<id>&format=json
/// ```
///
/// One extract request is made per hit, because the extracts module only
/// returns full plain text for a single page at a time.
pub struct WikipediaSource {
    client: JsonClient,
    api: String,
    tokenizer: Arc<dyn Tokenizer>,
    limit: usize,
}

impl WikipediaSource {
    pub fn new(api: &str, retry: RetryPolicy, timeout: Duration) -> Self {
        Self {
            client: JsonClient::new(retry, timeout),
            api: api.to_string(),
            tokenizer: Arc::new(WordPunctTokenizer),
            limit: DEFAULT_TOKEN_LIMIT,
        }
    }

    pub fn with_tokenizer(mut self, tokenizer: Arc<dyn Tokenizer>, limit: usize) -> Self {
        self.tokenizer = tokenizer;
        self.limit = limit;
        self
    }

    fn extract(&self, pageid: u64) -> Result<Option<(String, String)>, CorpusError> {
        let id = pageid.to_string();
        let reply = self.client.get(
            &self.api,
            &[
                ("action", "query"),
                ("prop", "extracts"),
                ("explaintext", "1"),
                ("pageids", &id),
                ("format", "json"),
            ],
        )?;
        let page = &reply.body["query"]["pages"][&id];
        if page.is_null() {
            return Ok(None);
        }
        let title = page["title"].as_str().unwrap_or_default().to_string();
        let text = page["extract"].as_str().unwrap_or_default().to_string();
        Ok((!text.trim().is_empty()).then_some((title, text)))
    }
}

fn search_hits(body: &Value) -> Result<Vec<u64>, CorpusError> {
    let hits = body["query"]["search"]
        .as_array()
        .ok_or_else(|| CorpusError::BadResponse("missing query.search".into()))?;
    hits.iter()
        .map(|h| {
            h["pageid"]
                .as_u64()
                .ok_or_else(|| CorpusError::BadResponse(format!("search hit without pageid: {h}")))
        })
        .collect()
}

impl DocumentSource for WikipediaSource {
    fn search(&self, query: &str, k: usize) -> Result<Vec<Document>, CorpusError> {
        let query = query.trim();
        if query.is_empty() {
            return Err(CorpusError::EmptyQuery);
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let q: String = query.chars().take(MAX_QUERY_CHARS).collect();
        let limit = k.to_string();
        let reply = self.client.get(
            &self.api,
            &[
                ("action", "query"),
                ("list", "search"),
                ("srsearch", &q),
                ("srlimit", &limit),
                ("format", "json"),
            ],
        )?;
        let mut docs = Vec::new();
        for pageid in search_hits(&reply.body)?.into_iter().take(k) {
            if let Some((title, text)) = self.extract(pageid)? {
                docs.push(Document::truncated(
                    format!("wiki:{pageid}"),
                    title,
                    &text,
                    self.tokenizer.as_ref(),
                    self.limit,
                ));
            }
        }
        Ok(docs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::stub::StubServer;

    fn fast() -> RetryPolicy {
        RetryPolicy {
            max_attempts: 2,
            base_delay: Duration::from_millis(1),
            max_delay: Duration::from_millis(1),
        }
    }

    #[test]
    fn search_then_extract() {
        let long: String = (0..700).map(|i| format!("t{i} ")).collect();
        let script = vec![
            (200, r#"{"query":{"search":[{"pageid":11,"title":"A"},{"pageid":12,"title":"B"}]}}"#.to_string()),
            (200, serde_json::json!({"query":{"pages":{"11":{"pageid":11,"title":"A","extract":long}}}}).to_string()),
            (200, r#"{"query":{"pages":{"12":{"pageid":12,"title":"B","extract":""}}}}"#.to_string()),
        ];
        let server = StubServer::start(script);
        let src = WikipediaSource::new(&format!("{}/w/api.php", server.url), fast(), Duration::from_secs(5));
        let docs = src.search("some question", 2).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].doc_id, "wiki:11");
        assert_eq!(docs[0].token_count, 512);
        let seen = server.join();
        assert!(seen[0].contains("srsearch=some"));
        assert!(seen[1].contains("pageids=11"));
    }

    #[test]
    fn malformed_search_is_an_error() {
        let server = StubServer::start(vec![(200, r#"{"batchcomplete":""}"#.to_string())]);
        let src = WikipediaSource::new(&server.url, fast(), Duration::from_secs(5));
        assert!(matches!(src.search("q", 3), Err(CorpusError::BadResponse(_))));
        server.join();
    }
}
