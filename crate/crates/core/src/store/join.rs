use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EmbeddingSet, ManifestRecord, StoreError};

/// The four per-image features the decoupler consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRole {
    /// (a) multi-modal text embedding of a style description
    StyleText,
    /// (b) multi-modal image embedding, style and content
    ImageMultimodal,
    /// (c) uni-modal image embedding, content only
    ContentUnimodal,
    /// (d) multi-modal text embedding of a content description
    ContentText,
}

impl FeatureRole {
    pub const ALL: [FeatureRole; 4] =
        [Self::StyleText, Self::ImageMultimodal, Self::ContentUnimodal, Self::ContentText];

    pub fn letter(self) -> char {
        match self {
            Self::StyleText => 'a',
            Self::ImageMultimodal => 'b',
            Self::ContentUnimodal => 'c',
            Self::ContentText => 'd',
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::StyleText => "style_text",
            Self::ImageMultimodal => "image_multimodal",
            Self::ContentUnimodal => "content_unimodal",
            Self::ContentText => "content_text",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FeatureRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.as_str(), self.letter())
    }
}

impl FromStr for FeatureRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s || s.len() == 1 && s.starts_with(r.letter()))
            .ok_or_else(|| format!("unknown feature role {s:?}"))
    }
}

/// A manifest record together with the row of each bound role.
#[derive(Debug, Clone)]
pub struct JoinedRow {
    pub record: usize,
    slots: [Option<usize>; 4],
}

/// Ids that are in the manifest but absent from one bound set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingIds {
    pub role: FeatureRole,
    pub ids: Vec<String>,
}

/// Manifest records joined against the bound embedding sets.
#[derive(Debug)]
pub struct JoinedTable<'a> {
    manifest: &'a [ManifestRecord],
    sets: BTreeMap<FeatureRole, &'a EmbeddingSet>,
    rows: Vec<JoinedRow>,
    missing: Vec<MissingIds>,
}

impl<'a> JoinedTable<'a> {
    pub fn rows(&self) -> &[JoinedRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Per-role ids that could not be joined. Rows missing from any bound
    /// set are left out of [`rows`](Self::rows).
    pub fn missing(&self) -> &[MissingIds] {
        &self.missing
    }

    pub fn record(&self, row: &JoinedRow) -> &'a ManifestRecord {
        &self.manifest[row.record]
    }

    pub fn id(&self, row: &JoinedRow) -> &'a str {
        &self.manifest[row.record].id
    }

    pub fn has_role(&self, role: FeatureRole) -> bool {
        self.sets.contains_key(&role)
    }

    pub fn dim(&self, role: FeatureRole) -> Option<usize> {
        self.sets.get(&role).map(|s| s.dim())
    }

    pub fn set(&self, role: FeatureRole) -> Option<&'a EmbeddingSet> {
        self.sets.get(&role).copied()
    }

    pub fn vector(&self, row: &JoinedRow, role: FeatureRole) -> Option<&'a [f32]> {
        let set = self.sets.get(&role)?;
        row.slots[role.slot()].map(|i| set.row(i))
    }
}

/// Joins manifest records with every bound embedding set.
///
/// Roles a and d are fused in the space of role b, so their dimensions must
/// match it. Role c is compared only after it has been mapped through an
/// alignment head.
pub fn align_sets<'a>(
    sets: &'a BTreeMap<FeatureRole, EmbeddingSet>,
    manifest: &'a [ManifestRecord],
) -> Result<JoinedTable<'a>, StoreError> {
    if let Some(b) = sets.get(&FeatureRole::ImageMultimodal) {
        for role in [FeatureRole::StyleText, FeatureRole::ContentText] {
            if let Some(other) = sets.get(&role) {
                if other.dim() != b.dim() {
                    return Err(StoreError::FusionDimension {
                        left: role,
                        left_dim: other.dim(),
                        right: FeatureRole::ImageMultimodal,
                        right_dim: b.dim(),
                    });
                }
            }
        }
    } else if let (Some(a), Some(d)) = (sets.get(&FeatureRole::StyleText), sets.get(&FeatureRole::ContentText)) {
        if a.dim() != d.dim() {
            return Err(StoreError::FusionDimension {
                left: FeatureRole::StyleText,
                left_dim: a.dim(),
                right: FeatureRole::ContentText,
                right_dim: d.dim(),
            });
        }
    }

    let mut missing: BTreeMap<FeatureRole, Vec<String>> = BTreeMap::new();
    let mut rows = Vec::with_capacity(manifest.len());
    for (record, rec) in manifest.iter().enumerate() {
        let mut slots = [None; 4];
        let mut complete = true;
        for (&role, set) in sets {
            match set.position(&rec.id) {
                Some(i) => slots[role.slot()] = Some(i),
                None => {
                    missing.entry(role).or_default().push(rec.id.clone());
                    complete = false;
                }
            }
        }
        if complete {
            rows.push(JoinedRow { record, slots });
        }
    }
    Ok(JoinedTable {
        manifest,
        sets: sets.iter().map(|(&r, s)| (r, s)).collect(),
        rows,
        missing: missing.into_iter().map(|(role, ids)| MissingIds { role, ids }).collect(),
    })
}
