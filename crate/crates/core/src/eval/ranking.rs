use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::retrieval::{RankedList, RetrievalIndex};
use crate::store::{EmbeddingSet, ManifestRecord};

/// AP@k from relevance flags in rank order:
/// `sum_{i<=k} P(i) * rel(i) / min(n_relevant, k)`.
pub fn average_precision_from_flags(flags: &[bool], n_relevant: usize, k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if n_relevant == 0 {
        return Err(EvalError::NoRelevant);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, _) in flags.iter().take(k).enumerate().filter(|(_, &rel)| rel) {
        hits += 1;
        sum += hits as f64 / (i + 1) as f64;
    }
    Ok(sum / n_relevant.min(k) as f64)
}

pub fn average_precision_at_k(hits: &RankedList, relevant: &HashSet<String>, k: usize) -> Result<f64, EvalError> {
    let flags: Vec<bool> = hits.ids().take(k).map(|id| relevant.contains(id)).collect();
    average_precision_from_flags(&flags, relevant.len(), k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallMode {
    /// 1 if any relevant item is in the top k.
    #[default]
    AnyHit,
    /// Fraction of the relevant set found in the top k.
    Proportional,
}

pub fn recall_from_flags(flags: &[bool], n_relevant: usize, k: usize, mode: RecallMode) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if n_relevant == 0 {
        return Err(EvalError::NoRelevant);
    }
    let found = flags.iter().take(k).filter(|&&f| f).count();
    Ok(match mode {
        RecallMode::AnyHit => (found > 0) as u8 as f64,
        RecallMode::Proportional => found as f64 / n_relevant as f64,
    })
}

/// `1` iff at least one relevant id is among the top `k` hits.
pub fn recall_at_k(hits: &RankedList, relevant: &HashSet<String>, k: usize) -> Result<f64, EvalError> {
    let flags: Vec<bool> = hits.ids().take(k).map(|id| relevant.contains(id)).collect();
    recall_from_flags(&flags, relevant.len(), k, RecallMode::AnyHit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelField {
    #[default]
    Artist,
    Style,
}

impl LabelField {
    pub fn of(self, record: &ManifestRecord) -> &str {
        match self {
            LabelField::Artist => &record.artist,
            LabelField::Style => &record.style,
        }
    }
}

impl std::str::FromStr for LabelField {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "artist" => Ok(Self::Artist),
            "style" => Ok(Self::Style),
            _ => Err(format!("unknown label field {s:?} (expected artist or style)")),
        }
    }
}

/// Which label makes a gallery item relevant to a query, and optionally
/// which queries (by style label) take part.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelevanceSpec {
    pub label_field: LabelField,
    pub label_filter: Option<String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RetrievalOptions {
    pub allow_self_match: bool,
    pub recall_mode: RecallMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalEval {
    /// `mAP@k` and `R@k` for every requested k.
    pub metrics: BTreeMap<String, f64>,
    pub queries_evaluated: usize,
    /// Queries dropped because no gallery item shares their label.
    pub queries_without_relevant: usize,
}

/// Scores ranked lists against manifest labels.
pub fn score_rankings(
    lists: &[RankedList],
    manifest: &[ManifestRecord],
    gallery_ids: &[String],
    spec: &RelevanceSpec,
    ks: &[usize],
    opts: RetrievalOptions,
) -> Result<RetrievalEval, EvalError> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(EvalError::ZeroK);
    }
    let by_id: HashMap<&str, &ManifestRecord> = manifest.iter().map(|r| (r.id.as_str(), r)).collect();
    let label_of = |id: &str| -> Result<&str, EvalError> {
        by_id.get(id).map(|r| spec.label_field.of(r)).ok_or_else(|| EvalError::UnknownId(id.to_string()))
    };
    let mut per_label: HashMap<&str, usize> = HashMap::new();
    let gallery: HashSet<&str> = gallery_ids.iter().map(String::as_str).collect();
    for id in gallery_ids {
        *per_label.entry(label_of(id)?).or_default() += 1;
    }

    let mut sums = vec![(0.0, 0.0); ks.len()];
    let (mut evaluated, mut without_relevant) = (0usize, 0usize);
    for list in lists {
        let record = by_id.get(list.query_id.as_str()).ok_or_else(|| EvalError::UnknownId(list.query_id.clone()))?;
        if let Some(filter) = &spec.label_filter {
            if &record.style != filter {
                continue;
            }
        }
        let label = spec.label_field.of(record);
        let mut n_relevant = per_label.get(label).copied().unwrap_or(0);
        if !opts.allow_self_match && gallery.contains(list.query_id.as_str()) {
            n_relevant -= 1;
        }
        if n_relevant == 0 {
            without_relevant += 1;
            continue;
        }
        let flags: Vec<bool> = list.ids().map(|id| label_of(id).map(|l| l == label)).collect::<Result<_, _>>()?;
        for (sum, &k) in sums.iter_mut().zip(ks) {
            sum.0 += average_precision_from_flags(&flags, n_relevant, k)?;
            sum.1 += recall_from_flags(&flags, n_relevant, k, opts.recall_mode)?;
        }
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(EvalError::EmptyQuerySet { filter: spec.label_filter.clone() });
    }
    let mut metrics = BTreeMap::new();
    for ((map, rec), &k) in sums.iter().zip(ks) {
        metrics.insert(format!("mAP@{k}"), map / evaluated as f64);
        metrics.insert(format!("R@{k}"), rec / evaluated as f64);
    }
    Ok(RetrievalEval { metrics, queries_evaluated: evaluated, queries_without_relevant: without_relevant })
}

/// Retrieves every query to depth `max(ks)` and scores the rankings.
pub fn evaluate_retrieval(
    index: &RetrievalIndex,
    queries: &EmbeddingSet,
    manifest: &[ManifestRecord],
    spec: &RelevanceSpec,
    ks: &[usize],
    opts: RetrievalOptions,
) -> Result<RetrievalEval, EvalError> {
    let depth = ks.iter().copied().max().ok_or(EvalError::ZeroK)?;
    let lists = index.batch_retrieve(queries, depth, opts.allow_self_match)?;
    score_rankings(&lists, manifest, index.ids(), spec, ks, opts)
}
