//! Retrieval, clustering and rating-agreement metrics.

mod kmeans;
mod partition;
mod ranking;
mod rating;
mod report;

pub use kmeans::{kmeans, KMeansOptions, KMeansResult};
pub use partition::{adjusted_rand_index, clustering_accuracy, encode_labels, hungarian};
pub use ranking::{
    average_precision_at_k, average_precision_from_flags, evaluate_retrieval, recall_at_k, recall_from_flags,
    score_rankings, LabelField, RecallMode, RelevanceSpec, RetrievalEval, RetrievalOptions,
};
pub use rating::{average_ranks, mean_absolute_error, pearson, spearman_rho, style_score};
pub use report::{filter_key, retrieval_table_tsv, MetricsReport, ReportMeta, TABLE_COLUMNS};

use crate::retrieval::RetrievalError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no relevant items for this query")]
    NoRelevant,
    #[error("lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} items, got {n}")]
    TooFewItems { n: usize, needed: usize },
    #[error("cannot form {k} clusters from {n} points")]
    TooManyClusters { k: usize, n: usize },
    #[error("points must be finite and share one dimension")]
    InvalidPoints,
    #[error("rank variance is zero; correlation undefined")]
    ZeroVariance,
    #[error("non-finite value")]
    NonFinite,
    #[error("expected a unit vector, got norm {norm}")]
    NotUnit { norm: f64 },
    #[error("id {0:?} is not in the manifest")]
    UnknownId(String),
    #[error("no queries left to evaluate (filter {filter:?})")]
    EmptyQuerySet { filter: Option<String> },
    #[error("metric {name} has invalid value {value}")]
    InvalidMetric { name: String, value: f64 },
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}
