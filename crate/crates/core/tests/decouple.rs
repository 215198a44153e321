mod common;

use std::collections::BTreeMap;

use common::*;
use proptest::prelude::*;
use sdec_core::decouple::{
    confidence_alpha, decouple_batch, fuse, normalize, project_style, projection_residual, ContentSource,
    DecoupleOptions,
};
use sdec_core::store::{align_sets, Split};
use sdec_core::{AlignmentHead, EmbeddingSet, FeatureRole, ManifestRecord};

fn unit_pair(max_dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2..=max_dim, any::<u64>()).prop_map(|(dim, seed)| {
        let mut r = rng(seed);
        (unit(dim, &mut r), unit(dim, &mut r))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn outputs_are_unit((s, c) in unit_pair(64), clamp in any::<bool>()) {
        let p = project_style(&s, &c, clamp).unwrap();
        prop_assert!((norm(&p.s_pure) - 1.0).abs() < 1e-6);
        prop_assert!(p.alpha >= 0.0 && p.alpha <= 2.0);
        if clamp {
            prop_assert!(p.alpha <= 1.0);
        }
    }

    #[test]
    fn residual_identity((s, c) in unit_pair(64)) {
        let alpha = confidence_alpha(&s, &c).unwrap();
        let r = projection_residual(&s, &c, alpha);
        prop_assert!((dot(&r, &c) - (1.0 - alpha) * dot(&s, &c)).abs() < 1e-6);
    }

    #[test]
    fn removal_is_monotone((s, c) in unit_pair(64), alpha in 0.0f64..=1.0) {
        let r = projection_residual(&s, &c, alpha);
        prop_assert!(dot(&r, &c).abs() <= dot(&s, &c).abs() + 1e-12);
    }

    #[test]
    fn full_removal_is_idempotent((s, c) in unit_pair(64)) {
        let once = normalize(&projection_residual(&s, &c, 1.0)).unwrap();
        let twice = projection_residual(&once, &c, 1.0);
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn fuse_is_symmetric_and_unit((x, y) in unit_pair(32)) {
        let a = fuse(&x, &y).unwrap();
        let b = fuse(&y, &x).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!((norm(&a) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn orthogonal_and_identical_inputs() {
    let p = project_style(&[1.0, 0.0], &[0.0, 1.0], false).unwrap();
    assert_eq!(p.alpha, 1.0);
    assert_eq!(p.s_pure, vec![1.0, 0.0]);
    let p = project_style(&[0.6, 0.8], &[0.6, 0.8], false).unwrap();
    assert!(p.alpha.abs() < 1e-15);
    assert!((p.s_pure[0] - 0.6).abs() < 1e-12 && (p.s_pure[1] - 0.8).abs() < 1e-12);
}

#[test]
fn negative_similarity_overshoots_unless_clamped() {
    let s = normalize(&[-0.6, 0.8]).unwrap();
    let c = [1.0, 0.0];
    let free = project_style(&s, &c, false).unwrap();
    assert!((free.alpha - 1.6).abs() < 1e-12);
    // alpha > 1 flips the sign of the content component
    assert!(free.s_pure[0] > 0.0);
    let clamped = project_style(&s, &c, true).unwrap();
    assert_eq!(clamped.alpha, 1.0);
    assert!(clamped.s_pure[0].abs() < 1e-12);
}

#[test]
fn zero_residual_and_bad_inputs_error() {
    // s_r = -c_r gives alpha = 2 and the residual -s_r
    let flipped = project_style(&[0.0, 1.0], &[0.0, -1.0], false).unwrap();
    assert_eq!(flipped.s_pure, vec![0.0, -1.0]);
    assert!(project_style(&[2.0, 0.0], &[1.0, 0.0], false).is_err());
    assert!(project_style(&[1.0, 0.0], &[1.0, 0.0, 0.0], false).is_err());
    assert!(normalize(&[0.0, 0.0]).is_err());
    assert!(normalize(&[f64::NAN, 1.0]).is_err());
}

fn record(id: &str) -> ManifestRecord {
    ManifestRecord { id: id.into(), artist: "x".into(), style: "y".into(), split: Split::Gallery, human_score: None }
}

fn set(rows: &[(&str, Vec<f64>)]) -> EmbeddingSet {
    let dim = rows[0].1.len();
    EmbeddingSet::from_rows(
        "m",
        dim,
        rows.iter().map(|(id, v)| (id.to_string(), v.iter().map(|&x| x as f32).collect::<Vec<f32>>())),
    )
    .unwrap()
}

fn f32_unit(dim: usize, r: &mut impl rand::Rng) -> Vec<f64> {
    // round through f32 so the oracle sees exactly what the store holds
    unit(dim, r).iter().map(|&v| v as f32 as f64).collect()
}

#[test]
fn batch_matches_composed_scalar_ops() {
    let mut r = rng(11);
    let ids = ["r0", "r1", "r2"];
    let mut rows: BTreeMap<FeatureRole, Vec<(&str, Vec<f64>)>> = BTreeMap::new();
    for id in ids {
        for role in FeatureRole::ALL {
            rows.entry(role).or_default().push((id, f32_unit(4, &mut r)));
        }
    }
    let sets: BTreeMap<FeatureRole, EmbeddingSet> = rows.iter().map(|(&role, v)| (role, set(v))).collect();
    let manifest: Vec<ManifestRecord> = ids.iter().map(|id| record(id)).collect();
    let table = align_sets(&sets, &manifest).unwrap();
    let head = AlignmentHead::new(4, 4, gaussian(16, &mut r), gaussian(4, &mut r), 0.1, 0.05).unwrap();

    let out = decouple_batch(&table, &DecoupleOptions::full(&head)).unwrap();
    assert_eq!(out.len(), 3);
    for (i, v) in out.iter().enumerate() {
        let get = |role: FeatureRole| rows[&role][i].1.clone();
        let n = |x: &[f64]| normalize(x).unwrap();
        let s_r = fuse(&n(&get(FeatureRole::StyleText)), &n(&get(FeatureRole::ImageMultimodal))).unwrap();
        let mapped = n(&head.forward(&get(FeatureRole::ContentUnimodal)).unwrap());
        let c_r = fuse(&n(&get(FeatureRole::ContentText)), &mapped).unwrap();
        let p = project_style(&s_r, &c_r, false).unwrap();
        assert_eq!(v.id, ids[i]);
        assert_eq!(v.s_r, s_r);
        assert_eq!(v.c_r.as_ref(), Some(&c_r));
        assert_eq!(v.alpha, Some(p.alpha));
        assert_eq!(v.s_pure, p.s_pure);
    }

    // without text the row falls back to normalize(b) and normalize(head(c))
    let no_text = DecoupleOptions { use_text: false, content: ContentSource::Aligned(&head), clamp_alpha: false };
    let out = decouple_batch(&table, &no_text).unwrap();
    let b = normalize(&rows[&FeatureRole::ImageMultimodal][0].1).unwrap();
    let c = normalize(&head.forward(&rows[&FeatureRole::ContentUnimodal][0].1).unwrap()).unwrap();
    assert_eq!(out[0].s_r, b);
    assert_eq!(out[0].c_r.as_ref(), Some(&c));

    // no content source: s_pure is s_r, nothing projected
    let off = DecoupleOptions { use_text: false, content: ContentSource::Off, clamp_alpha: false };
    let out = decouple_batch(&table, &off).unwrap();
    assert_eq!(out[1].s_pure, out[1].s_r);
    assert_eq!(out[1].alpha, None);
}

#[test]
fn head_dimension_mismatch_is_reported() {
    let mut r = rng(12);
    let sets: BTreeMap<FeatureRole, EmbeddingSet> = [
        (FeatureRole::ImageMultimodal, set(&[("r0", unit(4, &mut r))])),
        (FeatureRole::ContentUnimodal, set(&[("r0", unit(6, &mut r))])),
    ]
    .into_iter()
    .collect();
    let manifest = vec![record("r0")];
    let table = align_sets(&sets, &manifest).unwrap();
    let head = AlignmentHead::identity(4, 0.1, 0.05).unwrap();
    let err = decouple_batch(&table, &DecoupleOptions::full(&head)).unwrap_err().to_string();
    assert!(err.contains('4') && err.contains('6'), "{err}");
}
