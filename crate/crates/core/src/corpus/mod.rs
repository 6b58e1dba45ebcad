//! Reference documents for autonomous practice.
//!
//! Sources return up to `k` documents for a query, each truncated to
//! [`DEFAULT_TOKEN_LIMIT`] tokens. [`FixtureCorpus`] serves a local directory
//! offline, [`WikipediaSource`] queries the live encyclopedia, and
//! [`CachedSource`] wraps either with a content-addressed disk cache.

mod cache;
mod fixture;
mod wikipedia;

pub use cache::{CacheStats, CachedSource};
pub use fixture::FixtureCorpus;
pub use wikipedia::{WikipediaSource, MAX_QUERY_CHARS, WIKIPEDIA_API};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::http::HttpError;
use crate::retrieval::RetrievalError;

pub const DEFAULT_TOKEN_LIMIT: usize = 512;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("search query is empty")]
    EmptyQuery,
    #[error("document search failed: {0}")]
    Http(#[from] HttpError),
    #[error("unexpected search response: {0}")]
    BadResponse(String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("fixture {path}: {message}")]
    Fixture { path: String, message: String },
    #[error("cache I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub text: String,
    pub token_count: usize,
}

impl Document {
    /// Builds a document whose text is truncated to `limit` tokens.
    pub fn truncated(doc_id: String, title: String, text: &str, tokenizer: &dyn Tokenizer, limit: usize) -> Self {
        let text = truncate_tokens(text, limit, tokenizer).to_string();
        let token_count = tokenizer.count(&text);
        Self {
            doc_id,
            title,
            text,
            token_count,
        }
    }
}

pub trait DocumentSource: Send + Sync {
    /// Up to `k` documents, most relevant first. No hits is an empty list.
    fn search(&self, query: &str, k: usize) -> Result<Vec<Document>, CorpusError>;
}

impl<T: DocumentSource + ?Sized> DocumentSource for Arc<T> {
    fn search(&self, query: &str, k: usize) -> Result<Vec<Document>, CorpusError> {
        (**self).search(query, k)
    }
}

/// A source with nothing in it; practice then runs without references.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoDocuments;

impl DocumentSource for NoDocuments {
    fn search(&self, query: &str, _k: usize) -> Result<Vec<Document>, CorpusError> {
        if query.trim().is_empty() {
            return Err(CorpusError::EmptyQuery);
        }
        Ok(Vec::new())
    }
}

pub trait Tokenizer: Send + Sync {
    /// Byte spans of the tokens of `text`, in order.
    fn spans(&self, text: &str) -> Vec<(usize, usize)>;

    fn count(&self, text: &str) -> usize {
        self.spans(text).len()
    }
}

/// Splits on whitespace and punctuation: a token is a maximal run of
/// alphanumeric characters or a single other non-space character.
#[derive(Debug, Default, Clone, Copy)]
pub struct WordPunctTokenizer;

impl Tokenizer for WordPunctTokenizer {
    fn spans(&self, text: &str) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut word_start: Option<usize> = None;
        for (i, c) in text.char_indices() {
            if c.is_alphanumeric() {
                word_start.get_or_insert(i);
                continue;
            }
            if let Some(s) = word_start.take() {
                out.push((s, i));
            }
            if !c.is_whitespace() {
                out.push((i, i + c.len_utf8()));
            }
        }
        if let Some(s) = word_start {
            out.push((s, text.len()));
        }
        out
    }
}

/// Longest prefix of `text` holding at most `limit` tokens, cut at the end
/// of the last kept token.
pub fn truncate_tokens<'a>(text: &'a str, limit: usize, tokenizer: &dyn Tokenizer) -> &'a str {
    let spans = tokenizer.spans(text);
    if spans.len() <= limit {
        return text;
    }
    match limit {
        0 => "",
        n => &text[..spans[n - 1].1],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenizer_splits_words_and_punctuation() {
        let t = WordPunctTokenizer;
        let text = "Hello, wörld! it's 42.";
        let toks: Vec<&str> = t.spans(text).iter().map(|&(a, b)| &text[a..b]).collect();
        assert_eq!(toks, ["Hello", ",", "wörld", "!", "it", "'", "s", "42", "."]);
    }

    #[test]
    fn truncation_examples() {
        let t = WordPunctTokenizer;
        let ten = "one two three four five six seven eight nine ten";
        assert_eq!(truncate_tokens(ten, 512, &t), ten);
        assert_eq!(truncate_tokens("", 512, &t), "");
        let long: String = (0..600).map(|i| format!("w{i} ")).collect();
        let cut = truncate_tokens(&long, 512, &t);
        assert_eq!(t.count(cut), 512);
        assert!(long.starts_with(cut));
        assert!(cut.ends_with("w511"));
    }

    #[test]
    fn no_documents_is_empty() {
        assert!(NoDocuments.search("q", 5).unwrap().is_empty());
        assert!(NoDocuments.search(" ", 5).is_err());
    }

    proptest! {
        #[test]
        fn truncation_is_idempotent_prefix(text in "[a-z ,.!\\n]{0,200}", limit in 1usize..40) {
            let t = WordPunctTokenizer;
            let once = truncate_tokens(&text, limit, &t);
            prop_assert!(text.starts_with(once));
            prop_assert!(t.count(once) <= limit);
            prop_assert_eq!(truncate_tokens(once, limit, &t), once);
            if t.count(&text) > limit {
                prop_assert_eq!(t.count(once), limit);
            }
        }
    }
}
