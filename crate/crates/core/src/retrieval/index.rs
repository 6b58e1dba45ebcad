use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use super::{cosine, Embedding, RetrievalError};

/// One retrieval hit.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored<Id> {
    pub id: Id,
    pub score: f64,
}

/// Exact cosine-similarity index.
///
/// Queries scan every entry, so results are exact. Ordering is by descending
/// score with ties broken by ascending id.
#[derive(Debug, Clone)]
pub struct VectorIndex<Id> {
    dim: usize,
    ids: Vec<Id>,
    vectors: Vec<Embedding>,
    positions: HashMap<Id, usize>,
}

impl<Id> VectorIndex<Id>
where
    Id: Clone + Ord + Hash,
{
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ids: Vec::new(),
            vectors: Vec::new(),
            positions: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &Id) -> bool {
        self.positions.contains_key(id)
    }

    pub fn get(&self, id: &Id) -> Option<&Embedding> {
        self.positions.get(id).map(|&i| &self.vectors[i])
    }

    pub fn insert(&mut self, id: Id, embedding: Embedding) -> Result<(), RetrievalError> {
        if embedding.dim() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dim,
                actual: embedding.dim(),
            });
        }
        if self.positions.contains_key(&id) {
            return Err(RetrievalError::DuplicateId);
        }
        self.positions.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.vectors.push(embedding);
        Ok(())
    }

    pub fn top_k(
        &self,
        query: &Embedding,
        k: usize,
        exclude: &HashSet<Id>,
    ) -> Result<Vec<Scored<Id>>, RetrievalError> {
        self.top_k_where(query, k, |id| !exclude.contains(id))
    }

    /// Like [`top_k`](Self::top_k) but keeps only ids accepted by `keep`.
    pub fn top_k_where<F>(&self, query: &Embedding, k: usize, keep: F) -> Result<Vec<Scored<Id>>, RetrievalError>
    where
        F: Fn(&Id) -> bool,
    {
        if query.dim() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut hits: Vec<Scored<Id>> = self
            .ids
            .iter()
            .zip(&self.vectors)
            .filter(|(id, _)| keep(id))
            .map(|(id, v)| Scored {
                id: id.clone(),
                score: cosine(query, v),
            })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        hits.truncate(k);
        Ok(hits)
    }
}
