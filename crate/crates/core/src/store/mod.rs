//! On-disk formats: the `SDEC` embedding file, the JSONL manifest, and the
//! join of both into per-image rows.

pub(crate) mod codec;
mod embedding;
mod join;
mod manifest;

use std::path::{Path, PathBuf};

pub use embedding::{
    encoded_len, load_embedding_set, write_embedding_set, EmbeddingSet, EMBEDDING_MAGIC, EMBEDDING_VERSION,
};
pub use join::{align_sets, FeatureRole, JoinedRow, JoinedTable, MissingIds};
pub use manifest::{load_manifest, manifest_to_jsonl, parse_manifest, ManifestRecord, Split, HUMAN_SCORE_RANGE};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { expected: u16, found: u16 },
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("trailing bytes: expected {expected} bytes, found {actual}")]
    TrailingBytes { expected: u64, actual: u64 },
    #[error("checksum mismatch: stored {stored:#010x}, computed {actual:#010x}")]
    ChecksumMismatch { stored: u32, actual: u32 },
    #[error("invalid UTF-8 string at byte {offset}")]
    InvalidUtf8 { offset: usize },
    #[error("string of {0} bytes exceeds the u16 length prefix")]
    StringTooLong(usize),
    #[error("dimension must be positive")]
    ZeroDim,
    #[error("{rows} rows x dim {dim} does not match {values} values")]
    Shape { rows: usize, dim: usize, values: usize },
    #[error("row {id:?} has {actual} values, expected {expected}")]
    RowLength { id: String, expected: usize, actual: usize },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("empty id at row {row}")]
    EmptyId { row: usize },
    #[error("non-finite value in row {id:?} at column {col}")]
    NonFinite { id: String, col: usize },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("cannot fuse {left} (dim {left_dim}) with {right} (dim {right_dim})")]
    FusionDimension { left: FeatureRole, left_dim: usize, right: FeatureRole, right_dim: usize },
}

impl StoreError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}
