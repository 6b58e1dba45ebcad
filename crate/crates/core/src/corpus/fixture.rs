use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use super::{CorpusError, Document, DocumentSource, Tokenizer};
use crate::retrieval::{Embedder, VectorIndex};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureFile {
    title: String,
    text: String,
}

/// Local document collection searched by embedding similarity.
///
/// On disk it is a directory of `*.json` files, each `{"title": .., "text": ..}`;
/// the file stem becomes the document id.
pub struct FixtureCorpus {
    embedder: Arc<dyn Embedder>,
    docs: Vec<Document>,
    index: VectorIndex<usize>,
}

impl FixtureCorpus {
    pub fn load(
        dir: &Path,
        embedder: Arc<dyn Embedder>,
        tokenizer: &dyn Tokenizer,
        limit: usize,
    ) -> Result<Self, CorpusError> {
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut entries = Vec::with_capacity(paths.len());
        for path in paths {
            let raw = fs::read_to_string(&path)?;
            let file: FixtureFile = serde_json::from_str(&raw).map_err(|e| CorpusError::Fixture {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            entries.push((format!("fixture:{stem}"), file.title, file.text));
        }
        Self::from_entries(entries, embedder, tokenizer, limit)
    }

    /// Builds a corpus from `(doc_id, title, text)` triples.
    pub fn from_entries(
        entries: Vec<(String, String, String)>,
        embedder: Arc<dyn Embedder>,
        tokenizer: &dyn Tokenizer,
        limit: usize,
    ) -> Result<Self, CorpusError> {
        let mut index = VectorIndex::new(embedder.dim());
        let mut docs = Vec::with_capacity(entries.len());
        for (i, (id, title, text)) in entries.into_iter().enumerate() {
            let doc = Document::truncated(id, title, &text, tokenizer, limit);
            index.insert(i, embedder.embed(&format!("{}\n{}", doc.title, doc.text))?)?;
            docs.push(doc);
        }
        Ok(Self { embedder, docs, index })
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }
}

impl DocumentSource for FixtureCorpus {
    fn search(&self, query: &str, k: usize) -> Result<Vec<Document>, CorpusError> {
        if query.trim().is_empty() {
            return Err(CorpusError::EmptyQuery);
        }
        if k == 0 || self.docs.is_empty() {
            return Ok(Vec::new());
        }
        let q = self.embedder.embed(query)?;
        let hits = self.index.top_k_where(&q, k, |_| true)?;
        Ok(hits.into_iter().map(|h| self.docs[h.id].clone()).collect())
    }
}
