use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::alignment::TrainConfig;
use crate::eval::{KMeansOptions, LabelField, RecallMode};
use crate::store::FeatureRole;

pub const CONFIG_VERSION: u32 = 1;

/// Which uni-modal content feature feeds `c_r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentMode {
    Off,
    Raw,
    #[default]
    Trained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoupleConfig {
    pub clamp_alpha: bool,
    pub use_text: bool,
    pub content: ContentMode,
}

impl Default for DecoupleConfig {
    fn default() -> Self {
        Self { clamp_alpha: false, use_text: true, content: ContentMode::Trained }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelevanceConfig {
    pub label_field: LabelField,
    /// Style labels that get their own mAP@1 column.
    pub style_columns: Vec<String>,
    pub recall_mode: RecallMode,
}

fn default_ks() -> Vec<usize> {
    vec![1, 10, 100]
}

/// A complete run description, read from one JSON document.
///
/// Relative paths are resolved against the directory holding the config
/// file. The run-level `seed` overrides `train.seed` and seeds K-Means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub config_version: u32,
    #[serde(default = "default_model")]
    pub model: String,
    pub manifest: PathBuf,
    pub embeddings: BTreeMap<FeatureRole, PathBuf>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub decouple: DecoupleConfig,
    #[serde(default)]
    pub relevance: RelevanceConfig,
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub kmeans: KMeansOptions,
    #[serde(default)]
    pub allow_self_match: bool,
    pub output_dir: PathBuf,
}

fn default_model() -> String {
    "sdec".to_string()
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub clamp_alpha: bool,
    pub label_field: Option<LabelField>,
    pub allow_self_match: bool,
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        if cfg.config_version != CONFIG_VERSION {
            return Err(PipelineError::Config(format!(
                "config_version {} is not supported (expected {CONFIG_VERSION})",
                cfg.config_version
            )));
        }
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut cfg.manifest);
        resolve(&mut cfg.output_dir);
        cfg.embeddings.values_mut().for_each(resolve);
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
            self.train.seed = seed;
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
        self.decouple.clamp_alpha |= o.clamp_alpha;
        if let Some(field) = o.label_field {
            self.relevance.label_field = field;
        }
        self.allow_self_match |= o.allow_self_match;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 over the effective config, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        value.as_object_mut().expect("object").remove("output_dir");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    /// Hash of the settings that determine the alignment head.
    pub(crate) fn align_fingerprint(&self) -> String {
        let relevant = serde_json::json!({
            "train": self.train,
            "manifest": self.manifest,
            "inputs": [
                self.embeddings.get(&FeatureRole::ContentUnimodal),
                self.embeddings.get(&FeatureRole::ImageMultimodal),
                self.embeddings.get(&FeatureRole::ContentText),
            ],
        });
        hex::encode(Sha256::digest(relevant.to_string().as_bytes()))
    }

    pub(crate) fn decouple_fingerprint(&self, head: Option<&str>) -> String {
        let relevant = serde_json::json!({
            "decouple": self.decouple,
            "manifest": self.manifest,
            "embeddings": self.embeddings,
            "head": head,
        });
        hex::encode(Sha256::digest(relevant.to_string().as_bytes()))
    }
}
