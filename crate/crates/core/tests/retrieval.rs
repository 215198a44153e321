mod common;

use common::*;
use proptest::prelude::*;
use sdec_core::retrieval::rankings_tsv;
use sdec_core::{EmbeddingSet, RetrievalError, RetrievalIndex};

fn set(prefix: &str, rows: &[Vec<f32>]) -> EmbeddingSet {
    let dim = rows.first().map_or(1, Vec::len);
    EmbeddingSet::from_rows("m", dim, rows.iter().enumerate().map(|(i, v)| (format!("{prefix}{i:03}"), v.clone())))
        .unwrap()
}

/// Scores every gallery row with f64 cosine and sorts by (score desc, id asc).
fn full_sort(gallery: &EmbeddingSet, q: &[f32], exclude: Option<&str>) -> Vec<(String, f64)> {
    let qn = q.iter().map(|&v| v as f64).map(|v| v * v).sum::<f64>().sqrt();
    let mut all: Vec<(String, f64)> = gallery
        .rows()
        .filter(|(id, _)| Some(*id) != exclude)
        .map(|(id, g)| {
            let gn = g.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
            let s = q.iter().zip(g).map(|(a, b)| *a as f64 * *b as f64).sum::<f64>() / (qn * gn);
            (id.to_string(), s)
        })
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all
}

// coarse integer grids make exact score ties common
fn grid_rows(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f32>>> {
    proptest::collection::vec(
        proptest::collection::vec(-2i8..=2, dim).prop_filter("nonzero", |v| v.iter().any(|&x| x != 0)),
        n,
    )
    .prop_map(|rows| rows.into_iter().map(|r| r.into_iter().map(f32::from).collect()).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn topk_matches_full_sort(
        (gallery, query, k) in (1usize..=4).prop_flat_map(|dim| (grid_rows(30, dim), grid_rows(1, dim), 1usize..=40))
    ) {
        let g = set("g", &gallery);
        let index = RetrievalIndex::build(&g).unwrap();
        let got = index.query_topk("q", &query[0], k, None).unwrap();
        let want = full_sort(&g, &query[0], None);
        prop_assert_eq!(got.hits.len(), k.min(30));
        // mathematically equal cosines can differ by an ulp after
        // normalization, so ranks are compared up to near-ties
        let oracle = |id: &str| want.iter().find(|(w, _)| w == id).unwrap().1;
        for (hit, (_, score)) in got.hits.iter().zip(&want) {
            prop_assert!((oracle(&hit.gallery_id) - score).abs() < 1e-6);
            prop_assert!((hit.score - score).abs() < 1e-6);
        }
        // identical rows score bit-identically and must come out by id
        for w in got.hits.windows(2) {
            if g.get(&w[0].gallery_id) == g.get(&w[1].gallery_id) {
                prop_assert!(w[0].gallery_id < w[1].gallery_id);
            }
        }
        // nothing left out scores clearly above the last hit
        let last = got.hits.last().unwrap().score;
        let taken: Vec<&str> = got.ids().collect();
        for (id, score) in &want {
            if !taken.contains(&id.as_str()) {
                prop_assert!(*score <= last + 1e-6);
            }
        }
    }
}

#[test]
fn hand_example_with_tie() {
    let g = EmbeddingSet::from_rows(
        "m",
        2,
        [("b", [1.0f32, 0.0]), ("a", [2.0, 0.0]), ("c", [0.0, 1.0]), ("d", [-1.0, 0.0]), ("e", [0.6, 0.8])],
    )
    .unwrap();
    let index = RetrievalIndex::build(&g).unwrap();
    let list = index.query_topk("q", &[3.0, 0.0], 5, None).unwrap();
    let ids: Vec<&str> = list.ids().collect();
    // a and b tie at 1.0 and the smaller id wins
    assert_eq!(ids, ["a", "b", "e", "c", "d"]);
    let scores: Vec<f64> = list.hits.iter().map(|h| h.score).collect();
    let want = [1.0, 1.0, 0.6, 0.0, -1.0];
    for (s, w) in scores.iter().zip(want) {
        assert!((s - w).abs() < 1e-7, "{scores:?}");
    }
    assert_eq!(rankings_tsv(std::slice::from_ref(&list)).lines().next().unwrap(), "q\t1\ta\t1.000000");
}

#[test]
fn self_matches_are_excluded_unless_allowed() {
    let mut r = rng(5);
    let rows: Vec<Vec<f32>> = (0..20).map(|_| unit(8, &mut r).into_iter().map(|v| v as f32).collect()).collect();
    let g = set("x", &rows);
    let index = RetrievalIndex::build(&g).unwrap();
    let excluded = index.batch_retrieve(&g, 20, false).unwrap();
    for list in &excluded {
        assert_eq!(list.hits.len(), 19);
        assert!(list.ids().all(|id| id != list.query_id));
        let want = full_sort(&g, g.get(&list.query_id).unwrap(), Some(&list.query_id));
        assert!(list.ids().eq(want.iter().map(|(id, _)| id.as_str())));
    }
    let allowed = index.batch_retrieve(&g, 1, true).unwrap();
    for list in &allowed {
        assert_eq!(list.hits[0].gallery_id, list.query_id);
        assert!((list.hits[0].score - 1.0).abs() < 1e-6);
    }
}

#[test]
fn scores_are_bounded_cosines() {
    let mut r = rng(6);
    let rows: Vec<Vec<f32>> =
        (0..50).map(|_| gaussian(16, &mut r).into_iter().map(|v| 100.0 * v as f32).collect()).collect();
    let g = set("g", &rows);
    let q = set("q", &rows[..10]);
    let lists = RetrievalIndex::build(&g).unwrap().batch_retrieve(&q, 50, true).unwrap();
    for list in lists {
        assert!(list.hits.iter().all(|h| (-1.0 - 1e-6..=1.0 + 1e-6).contains(&h.score)));
        assert!(list.hits.windows(2).all(|w| w[0].score >= w[1].score));
    }
}

#[test]
fn degenerate_inputs() {
    let g = set("g", &[vec![1.0, 0.0], vec![0.0, 1.0]]);
    let index = RetrievalIndex::build(&g).unwrap();
    assert!(matches!(index.query_topk("q", &[1.0, 0.0], 0, None), Err(RetrievalError::ZeroK)));
    assert!(matches!(index.query_topk("q", &[1.0], 1, None), Err(RetrievalError::DimMismatch { .. })));
    assert!(matches!(index.query_topk("q", &[0.0, 0.0], 1, None), Err(RetrievalError::ZeroQuery { .. })));

    let no_queries = EmbeddingSet::new("m", 2, vec![], vec![]).unwrap();
    assert!(index.batch_retrieve(&no_queries, 5, false).unwrap().is_empty());

    // a gallery holding only the query itself yields an empty list
    let lone = set("g", &[vec![1.0, 0.0]]);
    let lists = RetrievalIndex::build(&lone).unwrap().batch_retrieve(&lone, 3, false).unwrap();
    assert!(lists[0].hits.is_empty());
}
