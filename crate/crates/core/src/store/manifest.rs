use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Query,
    Gallery,
    Train,
}

/// One image of the dataset: its labels, split and optional human rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub artist: String,
    pub style: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_score: Option<f64>,
}

pub const HUMAN_SCORE_RANGE: (f64, f64) = (1.0, 5.0);

impl ManifestRecord {
    fn check(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if let Some(score) = self.human_score {
            let (lo, hi) = HUMAN_SCORE_RANGE;
            if !(lo..=hi).contains(&score) {
                return Err(format!("human_score {score} outside [{lo}, {hi}]"));
            }
        }
        Ok(())
    }
}

/// Parses JSONL manifest text. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>, StoreError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord =
            serde_json::from_str(line).map_err(|e| StoreError::Manifest { line: line_no, message: e.to_string() })?;
        record.check().map_err(|message| StoreError::Manifest { line: line_no, message })?;
        if !seen.insert(record.id.clone()) {
            return Err(StoreError::Manifest { line: line_no, message: format!("duplicate id {:?}", record.id) });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>, StoreError> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| StoreError::io(path.as_ref(), e))?;
    parse_manifest(&text)
}

pub fn manifest_to_jsonl(records: &[ManifestRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("manifest record serializes"));
        out.push('\n');
    }
    out
}
