//! Disentangles style from content in precomputed vision-language
//! embeddings and evaluates the resulting style vectors.
//!
//! The pipeline reads per-image embeddings for four feature roles (style
//! text, multi-modal image, uni-modal image, content text), aligns the
//! uni-modal space to the multi-modal one with a trained affine head, fuses
//! the roles into a style vector and a content vector, and projects the
//! content direction out of the style vector. Retrieval, clustering and
//! rating metrics score the result.

pub mod alignment;
pub mod decouple;
pub mod eval;
pub mod pipeline;
pub mod retrieval;
pub mod store;
pub mod synthetic;
pub mod vector;

pub use alignment::{AlignmentError, AlignmentHead, TrainConfig};
pub use decouple::{DecoupleError, DecoupleOptions, StyleVectors};
pub use eval::{EvalError, MetricsReport};
pub use retrieval::{RankedList, RetrievalError, RetrievalIndex};
pub use store::{EmbeddingSet, FeatureRole, ManifestRecord, StoreError};
