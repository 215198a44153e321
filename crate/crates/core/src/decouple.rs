//! Style/content fusion and confidence-weighted orthogonal projection.
//!
//! Given a fused style vector `s_r` and a fused content vector `c_r` (both
//! unit length), the content component of `s_r` is removed with weight
//! `alpha = max(0, 1 - cos(s_r, c_r))`:
//!
//! ```text
//! s_pure = normalize(s_r - alpha * (s_r . c_r) * c_r)
//! ```
//!
//! Vectors that are already nearly parallel keep most of their shared
//! direction; unrelated ones lose their full content component.

use rayon::prelude::*;
use serde::Serialize;

use crate::alignment::{AlignmentError, AlignmentHead};
use crate::store::{EmbeddingSet, FeatureRole, JoinedTable, StoreError};
use crate::vector::{dot, norm, to_f32, to_f64};

/// Norms below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;
/// Tolerance for the unit-length precondition of `confidence_alpha`.
pub const UNIT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, thiserror::Error)]
pub enum DecoupleError {
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("non-finite input")]
    NonFinite,
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("expected a unit vector, got norm {norm}")]
    NotUnit { norm: f64 },
    #[error("projection residual vanished")]
    ZeroResidual,
    #[error("joined table has no {0} set")]
    MissingRole(FeatureRole),
    #[error(transparent)]
    Head(#[from] AlignmentError),
    #[error("{id}: {source}")]
    Row {
        id: String,
        #[source]
        source: Box<DecoupleError>,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub fn normalize(v: &[f64]) -> Result<Vec<f64>, DecoupleError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(DecoupleError::NonFinite);
    }
    let n = norm(v);
    if n < ZERO_NORM {
        return Err(DecoupleError::ZeroVector);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// `normalize(x + y)`.
pub fn fuse(x: &[f64], y: &[f64]) -> Result<Vec<f64>, DecoupleError> {
    if x.len() != y.len() {
        return Err(DecoupleError::DimMismatch { left: x.len(), right: y.len() });
    }
    let sum: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
    normalize(&sum)
}

fn check_unit(v: &[f64]) -> Result<(), DecoupleError> {
    let n = norm(v);
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(DecoupleError::NotUnit { norm: n });
    }
    Ok(())
}

/// `max(0, 1 - s_r . c_r)` for unit inputs. Lies in `[0, 2]`.
pub fn confidence_alpha(s_r: &[f64], c_r: &[f64]) -> Result<f64, DecoupleError> {
    if s_r.len() != c_r.len() {
        return Err(DecoupleError::DimMismatch { left: s_r.len(), right: c_r.len() });
    }
    check_unit(s_r)?;
    check_unit(c_r)?;
    Ok((1.0 - dot(s_r, c_r)).max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub s_pure: Vec<f64>,
    pub alpha: f64,
}

/// The un-normalized residual `s_r - alpha * (s_r . c_r) * c_r`.
pub fn projection_residual(s_r: &[f64], c_r: &[f64], alpha: f64) -> Vec<f64> {
    let coeff = alpha * dot(s_r, c_r);
    s_r.iter().zip(c_r).map(|(s, c)| s - coeff * c).collect()
}

/// Removes the confidence-weighted content component of `s_r`.
///
/// With `clamp_alpha` the weight is limited to `[0, 1]`; otherwise negative
/// similarities give `alpha > 1` and the content component flips sign.
pub fn project_style(s_r: &[f64], c_r: &[f64], clamp_alpha: bool) -> Result<Projection, DecoupleError> {
    let mut alpha = confidence_alpha(s_r, c_r)?;
    if clamp_alpha {
        alpha = alpha.min(1.0);
    }
    let residual = projection_residual(s_r, c_r, alpha);
    let s_pure = normalize(&residual).map_err(|e| match e {
        DecoupleError::ZeroVector => DecoupleError::ZeroResidual,
        other => other,
    })?;
    Ok(Projection { s_pure, alpha })
}

/// Per-image output of decoupling.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleVectors {
    pub id: String,
    pub s_r: Vec<f64>,
    /// Absent when no content feature was available; then `s_pure == s_r`.
    pub c_r: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub s_pure: Vec<f64>,
}

/// Where the uni-modal content feature comes from.
#[derive(Debug, Clone, Copy)]
pub enum ContentSource<'h> {
    /// Ignore role c.
    Off,
    /// Use role c as-is; it must already live in the role-b space.
    Raw,
    /// Map role c through a trained alignment head.
    Aligned(&'h AlignmentHead),
}

#[derive(Debug, Clone, Copy)]
pub struct DecoupleOptions<'h> {
    /// Fuse the text roles a and d when they are bound.
    pub use_text: bool,
    pub content: ContentSource<'h>,
    pub clamp_alpha: bool,
}

impl<'h> DecoupleOptions<'h> {
    pub fn full(head: &'h AlignmentHead) -> Self {
        Self { use_text: true, content: ContentSource::Aligned(head), clamp_alpha: false }
    }
}

/// Decouples every joined row.
///
/// `s_r` fuses role b with role a (when text is used), and `c_r` fuses role
/// d with the mapped role c. Every operand is L2-normalized before fusion so
/// the mix does not depend on extractor or head output scale. A side with a
/// single feature is just that feature normalized; when no content feature
/// exists the row is passed through unprojected.
pub fn decouple_batch(table: &JoinedTable<'_>, opts: &DecoupleOptions<'_>) -> Result<Vec<StyleVectors>, DecoupleError> {
    let b_dim =
        table.dim(FeatureRole::ImageMultimodal).ok_or(DecoupleError::MissingRole(FeatureRole::ImageMultimodal))?;
    let content_dim = table.dim(FeatureRole::ContentUnimodal);
    match opts.content {
        ContentSource::Off => {}
        ContentSource::Raw => {
            let c = content_dim.ok_or(DecoupleError::MissingRole(FeatureRole::ContentUnimodal))?;
            if c != b_dim {
                return Err(DecoupleError::DimMismatch { left: c, right: b_dim });
            }
        }
        ContentSource::Aligned(head) => {
            let c = content_dim.ok_or(DecoupleError::MissingRole(FeatureRole::ContentUnimodal))?;
            head.expect_dims(c, b_dim)?;
        }
    }

    let results: Vec<Result<StyleVectors, DecoupleError>> = table
        .rows()
        .par_iter()
        .map(|row| {
            let id = table.id(row);
            decouple_row(table, row, opts).map_err(|e| DecoupleError::Row { id: id.to_string(), source: Box::new(e) })
        })
        .collect();
    results.into_iter().collect()
}

fn decouple_row(
    table: &JoinedTable<'_>,
    row: &crate::store::JoinedRow,
    opts: &DecoupleOptions<'_>,
) -> Result<StyleVectors, DecoupleError> {
    let b = normalize(&to_f64(table.vector(row, FeatureRole::ImageMultimodal).expect("joined row has role b")))?;
    let text = |role| match table.vector(row, role) {
        Some(v) if opts.use_text => normalize(&to_f64(v)).map(Some),
        _ => Ok(None),
    };

    let s_r = match text(FeatureRole::StyleText)? {
        Some(a) => fuse(&a, &b)?,
        None => b,
    };

    let content = match (opts.content, table.vector(row, FeatureRole::ContentUnimodal)) {
        (ContentSource::Off, _) | (_, None) => None,
        (ContentSource::Raw, Some(c)) => Some(normalize(&to_f64(c))?),
        (ContentSource::Aligned(head), Some(c)) => Some(normalize(&head.forward(&to_f64(c))?)?),
    };
    let c_r = match (text(FeatureRole::ContentText)?, content) {
        (Some(d), Some(c)) => Some(fuse(&d, &c)?),
        (Some(v), None) | (None, Some(v)) => Some(v),
        (None, None) => None,
    };

    let id = table.id(row).to_string();
    Ok(match c_r {
        Some(c_r) => {
            let Projection { s_pure, alpha } = project_style(&s_r, &c_r, opts.clamp_alpha)?;
            StyleVectors { id, s_r, c_r: Some(c_r), alpha: Some(alpha), s_pure }
        }
        None => StyleVectors { id, s_pure: s_r.clone(), s_r, c_r: None, alpha: None },
    })
}

/// Packs the `s_pure` vectors into an embedding set.
pub fn pure_style_set(vectors: &[StyleVectors], model_id: &str) -> Result<EmbeddingSet, DecoupleError> {
    let dim = vectors.first().map_or(1, |v| v.s_pure.len());
    Ok(EmbeddingSet::from_rows(model_id, dim, vectors.iter().map(|v| (v.id.clone(), to_f32(&v.s_pure))))?)
}

#[derive(Serialize)]
struct AlphaLine<'a> {
    id: &'a str,
    alpha: Option<f64>,
}

/// JSONL sidecar with one `{id, alpha}` object per row.
pub fn alpha_sidecar(vectors: &[StyleVectors]) -> String {
    let mut out = String::new();
    for v in vectors {
        out.push_str(&serde_json::to_string(&AlphaLine { id: &v.id, alpha: v.alpha }).unwrap());
        out.push('\n');
    }
    out
}
