//! Synthetic datasets with known style and content factors.
//!
//! Every item draws a style class and, independently, a content class. The
//! multi-modal image feature concatenates both class prototypes; the
//! uni-modal feature carries only the content prototype, expressed in its
//! own randomly rotated basis; the two text features are noisy copies of
//! the style and content prototypes in the multi-modal space.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::alignment::TrainConfig;
use crate::store::{
    manifest_to_jsonl, write_embedding_set, EmbeddingSet, FeatureRole, ManifestRecord, Split, StoreError,
};
use crate::vector::{dot, norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorConfig {
    pub items: usize,
    pub style_classes: usize,
    pub content_classes: usize,
    /// Artists per style class; artist labels nest inside styles.
    pub artists_per_style: usize,
    pub style_dim: usize,
    pub content_dim: usize,
    /// Scale of the style prototype inside the multi-modal feature, relative
    /// to the content prototype.
    pub style_weight: f64,
    /// Per-coordinate Gaussian noise on image features.
    pub noise: f64,
    /// Per-coordinate Gaussian noise on the style text feature.
    pub style_text_noise: f64,
    /// Per-coordinate Gaussian noise on the content text feature.
    pub content_text_noise: f64,
    pub query_fraction: f64,
    pub train_fraction: f64,
    /// Fraction of items that get a synthetic human rating.
    pub rated_fraction: f64,
    pub seed: u64,
}

impl Default for FactorConfig {
    fn default() -> Self {
        Self {
            items: 2000,
            style_classes: 20,
            content_classes: 50,
            artists_per_style: 2,
            style_dim: 16,
            content_dim: 16,
            style_weight: 1.0,
            noise: 0.1,
            style_text_noise: 0.3,
            content_text_noise: 1.0,
            query_fraction: 0.4,
            train_fraction: 0.3,
            rated_fraction: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FactorDataset {
    pub manifest: Vec<ManifestRecord>,
    pub sets: BTreeMap<FeatureRole, EmbeddingSet>,
    pub style_of: Vec<usize>,
    pub content_of: Vec<usize>,
}

fn unit_gaussian(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// A Haar-ish random orthogonal matrix (Gram-Schmidt on Gaussian rows),
/// row-major.
pub fn random_orthogonal(dim: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while rows.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for r in &rows {
                let p = dot(&v, r);
                for (x, y) in v.iter_mut().zip(r) {
                    *x -= p * y;
                }
            }
        }
        let n = norm(&v);
        if n > 1e-6 {
            rows.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    rows
}

pub fn mat_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, x)).collect()
}

/// Builds the dataset; identical configs give identical datasets.
pub fn factor_dataset(cfg: &FactorConfig) -> Result<FactorDataset, StoreError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = cfg.style_dim + cfg.content_dim;
    let style_protos: Vec<Vec<f64>> = (0..cfg.style_classes).map(|_| unit_gaussian(cfg.style_dim, &mut rng)).collect();
    let content_protos: Vec<Vec<f64>> =
        (0..cfg.content_classes).map(|_| unit_gaussian(cfg.content_dim, &mut rng)).collect();
    let rotation = random_orthogonal(dim, &mut rng);
    let image_noise = Normal::new(0.0, cfg.noise).expect("noise is a valid std");
    let style_text_noise = Normal::new(0.0, cfg.style_text_noise).expect("text noise is a valid std");
    let content_text_noise = Normal::new(0.0, cfg.content_text_noise).expect("text noise is a valid std");

    let mut manifest = Vec::with_capacity(cfg.items);
    let mut style_of = Vec::with_capacity(cfg.items);
    let mut content_of = Vec::with_capacity(cfg.items);
    let mut rows: BTreeMap<FeatureRole, Vec<(String, Vec<f32>)>> = BTreeMap::new();
    let n_query = (cfg.items as f64 * cfg.query_fraction).round() as usize;
    let n_train = (cfg.items as f64 * cfg.train_fraction).round() as usize;

    for i in 0..cfg.items {
        let s = rng.random_range(0..cfg.style_classes);
        let c = rng.random_range(0..cfg.content_classes);
        let artist = rng.random_range(0..cfg.artists_per_style.max(1));
        let id = format!("item{i:05}");

        let mut joint: Vec<f64> =
            style_protos[s].iter().map(|x| x * cfg.style_weight).chain(content_protos[c].iter().copied()).collect();
        let n = norm(&joint);
        joint.iter_mut().for_each(|x| *x /= n);
        let b: Vec<f64> = joint.iter().map(|x| x + image_noise.sample(&mut rng)).collect();

        let content_only: Vec<f64> = std::iter::repeat_n(0.0, cfg.style_dim)
            .chain(content_protos[c].iter().copied())
            .map(|x| x + image_noise.sample(&mut rng))
            .collect();
        let c_vec = mat_vec(&rotation, &content_only);

        let a: Vec<f64> = style_protos[s]
            .iter()
            .copied()
            .chain(std::iter::repeat_n(0.0, cfg.content_dim))
            .map(|x| x + style_text_noise.sample(&mut rng))
            .collect();
        let d: Vec<f64> = std::iter::repeat_n(0.0, cfg.style_dim)
            .chain(content_protos[c].iter().copied())
            .map(|x| x + content_text_noise.sample(&mut rng))
            .collect();

        let split = if i < n_query {
            Split::Query
        } else if i < n_query + n_train {
            Split::Train
        } else {
            Split::Gallery
        };
        let rated = rng.random::<f64>() < cfg.rated_fraction;
        let human_score = rated.then(|| {
            // raters see how close the item's style is to its class prototype
            let cos = dot(&b[..cfg.style_dim], &style_protos[s]) / norm(&b[..cfg.style_dim]).max(1e-12);
            (1.0 + 2.0 * (cos + 1.0) + rng.random_range(-0.5..0.5)).clamp(1.0, 5.0)
        });
        manifest.push(ManifestRecord {
            id: id.clone(),
            artist: format!("artist{s:02}_{artist}"),
            style: format!("style{s:02}"),
            split,
            human_score,
        });
        style_of.push(s);
        content_of.push(c);
        for (role, v) in [
            (FeatureRole::StyleText, a),
            (FeatureRole::ImageMultimodal, b),
            (FeatureRole::ContentUnimodal, c_vec),
            (FeatureRole::ContentText, d),
        ] {
            rows.entry(role).or_default().push((id.clone(), crate::vector::to_f32(&v)));
        }
    }

    let sets = rows
        .into_iter()
        .map(|(role, rows)| Ok((role, EmbeddingSet::from_rows(format!("synthetic-{}", role.as_str()), dim, rows)?)))
        .collect::<Result<_, StoreError>>()?;
    Ok(FactorDataset { manifest, sets, style_of, content_of })
}

/// File names used by [`write_fixture`], per role.
pub fn fixture_file(role: FeatureRole) -> String {
    format!("{}.sdec", role.as_str())
}

/// Writes the dataset as embedding files, a manifest and a run config
/// (`config.json`, style relevance, output under `out/`) into `dir`.
/// Returns the config path.
pub fn write_fixture(ds: &FactorDataset, dir: &Path, train: &TrainConfig) -> Result<PathBuf, StoreError> {
    std::fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
    let mut embeddings = serde_json::Map::new();
    for (role, set) in &ds.sets {
        write_embedding_set(set, dir.join(fixture_file(*role)))?;
        embeddings.insert(role.as_str().to_string(), fixture_file(*role).into());
    }
    let manifest_path = dir.join("manifest.jsonl");
    std::fs::write(&manifest_path, manifest_to_jsonl(&ds.manifest)).map_err(|e| StoreError::io(&manifest_path, e))?;
    let config = serde_json::json!({
        "config_version": 1,
        "model": "synthetic",
        "manifest": "manifest.jsonl",
        "embeddings": embeddings,
        "train": train,
        "relevance": {"label_field": "style"},
        "seed": train.seed,
        "output_dir": "out",
    });
    let path = dir.join("config.json");
    let text = serde_json::to_string_pretty(&config).expect("serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| StoreError::io(&path, e))?;
    Ok(path)
}
