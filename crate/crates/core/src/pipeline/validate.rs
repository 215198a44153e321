use std::collections::BTreeMap;
use std::fmt;

use super::config::{ContentMode, RunConfig};
use crate::store::{load_embedding_set, load_manifest, EmbeddingSet, FeatureRole, ManifestRecord, Split};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Issue {
    MissingFile { what: String, path: String },
    Unreadable { what: String, cause: String },
    MissingRole(FeatureRole),
    DimMismatch { left: FeatureRole, left_dim: usize, right: FeatureRole, right_dim: usize },
    MissingIds { role: FeatureRole, count: usize, sample: Vec<String> },
    NoQueries,
    NoGallery,
    BadKs(Vec<usize>),
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::MissingFile { what, path } => write!(f, "{what}: file not found: {path}"),
            Issue::Unreadable { what, cause } => write!(f, "{what}: {cause}"),
            Issue::MissingRole(role) => {
                write!(f, "no embedding file bound for required role {role}")
            }
            Issue::DimMismatch { left, left_dim, right, right_dim } => {
                write!(f, "{left} has dim {left_dim} but {right} has dim {right_dim}")
            }
            Issue::MissingIds { role, count, sample } => {
                write!(f, "{count} manifest ids missing from {role}, e.g. {}", sample.join(", "))
            }
            Issue::NoQueries => write!(f, "manifest has no query rows"),
            Issue::NoGallery => write!(f, "manifest has no gallery rows"),
            Issue::BadKs(ks) => write!(f, "ks must be positive and strictly ascending, got {ks:?}"),
        }
    }
}

/// Everything validation loaded, so later stages need not reload it.
#[derive(Debug)]
pub struct Inputs {
    pub manifest: Vec<ManifestRecord>,
    pub sets: BTreeMap<FeatureRole, EmbeddingSet>,
}

#[derive(Debug)]
pub struct Diagnostics {
    pub issues: Vec<Issue>,
    pub inputs: Option<Inputs>,
}

impl Diagnostics {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Checks files, headers, role dimensions and manifest joins.
pub fn validate(cfg: &RunConfig) -> Diagnostics {
    let mut issues = Vec::new();

    if cfg.ks.is_empty() || cfg.ks.contains(&0) || cfg.ks.windows(2).any(|w| w[0] >= w[1]) {
        issues.push(Issue::BadKs(cfg.ks.clone()));
    }

    let manifest = if !cfg.manifest.exists() {
        issues.push(Issue::MissingFile { what: "manifest".into(), path: cfg.manifest.display().to_string() });
        None
    } else {
        match load_manifest(&cfg.manifest) {
            Ok(m) => Some(m),
            Err(e) => {
                issues.push(Issue::Unreadable { what: "manifest".into(), cause: e.to_string() });
                None
            }
        }
    };

    let mut required = vec![FeatureRole::ImageMultimodal];
    if cfg.decouple.content != ContentMode::Off {
        required.push(FeatureRole::ContentUnimodal);
    }
    for role in required {
        if !cfg.embeddings.contains_key(&role) {
            issues.push(Issue::MissingRole(role));
        }
    }

    let mut sets = BTreeMap::new();
    for (&role, path) in &cfg.embeddings {
        if !path.exists() {
            issues.push(Issue::MissingFile { what: role.to_string(), path: path.display().to_string() });
            continue;
        }
        match load_embedding_set(path) {
            Ok(set) => {
                sets.insert(role, set);
            }
            Err(e) => issues.push(Issue::Unreadable { what: role.to_string(), cause: e.to_string() }),
        }
    }

    if let Some(b) = sets.get(&FeatureRole::ImageMultimodal) {
        let mut fused = vec![FeatureRole::StyleText, FeatureRole::ContentText];
        if cfg.decouple.content == ContentMode::Raw {
            fused.push(FeatureRole::ContentUnimodal);
        }
        for role in fused {
            if let Some(other) = sets.get(&role) {
                if other.dim() != b.dim() {
                    issues.push(Issue::DimMismatch {
                        left: role,
                        left_dim: other.dim(),
                        right: FeatureRole::ImageMultimodal,
                        right_dim: b.dim(),
                    });
                }
            }
        }
    }

    if let Some(manifest) = &manifest {
        if !manifest.iter().any(|r| r.split == Split::Query) {
            issues.push(Issue::NoQueries);
        }
        if !manifest.iter().any(|r| r.split == Split::Gallery) {
            issues.push(Issue::NoGallery);
        }
        for (&role, set) in &sets {
            let missing: Vec<String> =
                manifest.iter().filter(|r| set.position(&r.id).is_none()).map(|r| r.id.clone()).collect();
            if !missing.is_empty() {
                issues.push(Issue::MissingIds {
                    role,
                    count: missing.len(),
                    sample: missing.into_iter().take(5).collect(),
                });
            }
        }
    }

    let inputs = manifest.map(|manifest| Inputs { manifest, sets });
    Diagnostics { issues, inputs }
}
