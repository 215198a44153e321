use std::collections::HashMap;
use std::path::Path;

use super::codec::{self, Reader};
use super::StoreError;

pub const EMBEDDING_MAGIC: [u8; 4] = *b"SDEC";
pub const EMBEDDING_VERSION: u16 = 1;

/// Fixed-size prefix: magic, version, dim, count.
const PREFIX_LEN: usize = 4 + 2 + 4 + 8;

/// An id-indexed matrix of `f32` vectors produced by one encoder.
///
/// Construction validates every invariant (unique non-empty ids, finite
/// values, `ids.len() * dim == data.len()`), so a value of this type is
/// always safe to write and to share across threads.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    model_id: String,
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl PartialEq for EmbeddingSet {
    /// Bit-level equality on the stored values.
    fn eq(&self, other: &Self) -> bool {
        self.model_id == other.model_id
            && self.dim == other.dim
            && self.ids == other.ids
            && self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl EmbeddingSet {
    pub fn new(model_id: impl Into<String>, dim: usize, ids: Vec<String>, data: Vec<f32>) -> Result<Self, StoreError> {
        let set = Self::new_unchecked(model_id.into(), dim, ids, data);
        set.validate()?;
        Ok(set)
    }

    /// Builds a set from one row per id.
    pub fn from_rows<I, S, R>(model_id: impl Into<String>, dim: usize, rows: I) -> Result<Self, StoreError>
    where
        I: IntoIterator<Item = (S, R)>,
        S: Into<String>,
        R: AsRef<[f32]>,
    {
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (id, row) in rows {
            let id = id.into();
            let row = row.as_ref();
            if row.len() != dim {
                return Err(StoreError::RowLength { id, expected: dim, actual: row.len() });
            }
            ids.push(id);
            data.extend_from_slice(row);
        }
        Self::new(model_id, dim, ids, data)
    }

    pub(crate) fn new_unchecked(model_id: String, dim: usize, ids: Vec<String>, data: Vec<f32>) -> Self {
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Self { model_id, dim, ids, data, index }
    }

    /// Re-checks every invariant.
    pub fn validate(&self) -> Result<(), StoreError> {
        if self.dim == 0 {
            return Err(StoreError::ZeroDim);
        }
        if self.model_id.len() > u16::MAX as usize {
            return Err(StoreError::StringTooLong(self.model_id.len()));
        }
        if self.ids.len().checked_mul(self.dim) != Some(self.data.len()) {
            return Err(StoreError::Shape { rows: self.ids.len(), dim: self.dim, values: self.data.len() });
        }
        if self.index.len() != self.ids.len() {
            let mut seen = std::collections::HashSet::new();
            let dup = self.ids.iter().find(|id| !seen.insert(id.as_str())).cloned().unwrap_or_default();
            return Err(StoreError::DuplicateId(dup));
        }
        for (row, id) in self.ids.iter().enumerate() {
            if id.is_empty() {
                return Err(StoreError::EmptyId { row });
            }
            if id.len() > u16::MAX as usize {
                return Err(StoreError::StringTooLong(id.len()));
            }
            if let Some(col) = self.row(row).iter().position(|v| !v.is_finite()) {
                return Err(StoreError::NonFinite { id: id.clone(), col });
            }
        }
        Ok(())
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
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

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.row(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f32])> + '_ {
        self.ids.iter().map(String::as_str).zip(self.data.chunks_exact(self.dim))
    }

    /// Encodes the set in the `SDEC` v1 layout.
    pub fn to_bytes(&self) -> Result<Vec<u8>, StoreError> {
        self.validate()?;
        let ids_len: usize = self.ids.iter().map(|id| 2 + id.len()).sum();
        let mut out = Vec::with_capacity(PREFIX_LEN + 2 + self.model_id.len() + ids_len + self.data.len() * 4 + 4);
        out.extend_from_slice(&EMBEDDING_MAGIC);
        out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
        let dim = u32::try_from(self.dim).map_err(|_| StoreError::ZeroDim)?;
        out.extend_from_slice(&dim.to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        codec::put_string(&mut out, &self.model_id)?;
        for id in &self.ids {
            codec::put_string(&mut out, id)?;
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        codec::seal(&mut out);
        Ok(out)
    }

    /// Decodes an `SDEC` v1 buffer, rejecting anything that would violate
    /// the set invariants.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        if bytes.len() >= 4 && bytes[..4] != EMBEDDING_MAGIC {
            return Err(StoreError::BadMagic { expected: EMBEDDING_MAGIC, found: bytes[..4].try_into().unwrap() });
        }
        let mut r = Reader::new(bytes);
        let magic = r.take(4)?;
        debug_assert_eq!(magic, EMBEDDING_MAGIC);
        let version = r.u16()?;
        if version != EMBEDDING_VERSION {
            return Err(StoreError::UnsupportedVersion { expected: EMBEDDING_VERSION, found: version });
        }
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(StoreError::ZeroDim);
        }
        let count = r.u64()?;
        let model_id = r.string()?;
        // Every id takes at least two bytes, which bounds a sane count by the
        // buffer length before anything is allocated.
        if count > (bytes.len() / 2) as u64 {
            return Err(StoreError::Truncated {
                expected: (r.position() as u64).saturating_add(count.saturating_mul(2)),
                actual: bytes.len() as u64,
            });
        }
        let count = count as usize;
        let mut ids = Vec::with_capacity(count);
        for _ in 0..count {
            ids.push(r.string()?);
        }
        let data_len = (count as u64)
            .checked_mul(dim as u64)
            .and_then(|n| n.checked_mul(4))
            .ok_or(StoreError::Shape { rows: count, dim, values: usize::MAX })?;
        let expected = r.position() as u64 + data_len + 4;
        let actual = bytes.len() as u64;
        if actual < expected {
            return Err(StoreError::Truncated { expected, actual });
        }
        if actual > expected {
            return Err(StoreError::TrailingBytes { expected, actual });
        }
        codec::unseal(bytes)?;
        let raw = r.take(data_len as usize)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Self::new(model_id, dim, ids, data)
    }
}

/// Writes `set` to `path`. The set is validated before any bytes are
/// written; the file appears atomically.
pub fn write_embedding_set(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let bytes = set.to_bytes()?;
    codec::write_atomic(path.as_ref(), &bytes).map_err(|e| StoreError::io(path.as_ref(), e))
}

pub fn load_embedding_set(path: impl AsRef<Path>) -> Result<EmbeddingSet, StoreError> {
    let bytes = std::fs::read(path.as_ref()).map_err(|e| StoreError::io(path.as_ref(), e))?;
    EmbeddingSet::from_bytes(&bytes)
}

/// Exact encoded size of a set in bytes.
pub fn encoded_len(model_id: &str, ids: &[String], dim: usize) -> usize {
    PREFIX_LEN + 2 + model_id.len() + ids.iter().map(|id| 2 + id.len()).sum::<usize>() + ids.len() * dim * 4 + 4
}
