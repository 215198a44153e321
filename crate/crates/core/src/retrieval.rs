//! Exact cosine top-k search over an in-memory gallery.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::decouple::ZERO_NORM;
use crate::store::EmbeddingSet;
use crate::vector::dot_f32;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("gallery row {id:?} has zero norm")]
    ZeroRow { id: String },
    #[error("query {id:?} has zero norm")]
    ZeroQuery { id: String },
    #[error("query dimension {actual} does not match gallery dimension {expected}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("k must be at least 1")]
    ZeroK,
}

/// Gallery rows scaled to unit length, in the original id order.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    dim: usize,
    ids: Vec<String>,
    rows: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub gallery_id: String,
    pub score: f64,
}

/// Hits for one query, best first; ties go to the smaller gallery id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub hits: Vec<Hit>,
}

impl RankedList {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.hits.iter().map(|h| h.gallery_id.as_str())
    }
}

fn unit_f32(v: &[f32]) -> Option<Vec<f32>> {
    let n = dot_f32(v, v).sqrt();
    (n >= ZERO_NORM).then(|| v.iter().map(|&x| (x as f64 / n) as f32).collect())
}

impl RetrievalIndex {
    pub fn build(gallery: &EmbeddingSet) -> Result<Self, RetrievalError> {
        let mut rows = Vec::with_capacity(gallery.data().len());
        for (id, row) in gallery.rows() {
            let unit = unit_f32(row).ok_or_else(|| RetrievalError::ZeroRow { id: id.to_string() })?;
            rows.extend(unit);
        }
        Ok(Self { dim: gallery.dim(), ids: gallery.ids().to_vec(), rows })
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

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    fn rank_cmp(&self, a: &(f64, usize), b: &(f64, usize)) -> Ordering {
        b.0.total_cmp(&a.0).then_with(|| self.ids[a.1].cmp(&self.ids[b.1]))
    }

    /// Top `min(k, |gallery| - excluded)` gallery rows by cosine score.
    pub fn query_topk(
        &self,
        query_id: &str,
        q: &[f32],
        k: usize,
        exclude_id: Option<&str>,
    ) -> Result<RankedList, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::ZeroK);
        }
        if q.len() != self.dim {
            return Err(RetrievalError::DimMismatch { expected: self.dim, actual: q.len() });
        }
        let q = unit_f32(q).ok_or_else(|| RetrievalError::ZeroQuery { id: query_id.to_string() })?;
        let mut scored: Vec<(f64, usize)> = (0..self.ids.len())
            .filter(|&i| exclude_id != Some(self.ids[i].as_str()))
            .map(|i| (dot_f32(&q, self.row(i)), i))
            .collect();
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k, |a, b| self.rank_cmp(a, b));
            scored.truncate(k);
        }
        scored.sort_unstable_by(|a, b| self.rank_cmp(a, b));
        Ok(RankedList {
            query_id: query_id.to_string(),
            hits: scored.into_iter().map(|(score, i)| Hit { gallery_id: self.ids[i].clone(), score }).collect(),
        })
    }

    /// Runs every query in parallel. Unless `allow_self_match` is set, a
    /// query whose id is also in the gallery never retrieves itself.
    pub fn batch_retrieve(
        &self,
        queries: &EmbeddingSet,
        k: usize,
        allow_self_match: bool,
    ) -> Result<Vec<RankedList>, RetrievalError> {
        if queries.dim() != self.dim && !queries.is_empty() {
            return Err(RetrievalError::DimMismatch { expected: self.dim, actual: queries.dim() });
        }
        let ids = queries.ids();
        (0..queries.len())
            .into_par_iter()
            .map(|i| {
                let exclude = (!allow_self_match).then_some(ids[i].as_str());
                self.query_topk(&ids[i], queries.row(i), k, exclude)
            })
            .collect()
    }
}

/// `query_id<TAB>rank<TAB>gallery_id<TAB>score`, ranks from 1, scores to six
/// decimals.
pub fn rankings_tsv(lists: &[RankedList]) -> String {
    let mut out = String::new();
    for list in lists {
        for (rank, hit) in list.hits.iter().enumerate() {
            writeln!(out, "{}\t{}\t{}\t{:.6}", list.query_id, rank + 1, hit.gallery_id, hit.score).unwrap();
        }
    }
    out
}
