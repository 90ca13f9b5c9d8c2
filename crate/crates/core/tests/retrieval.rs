use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tag_core::caption_index::{
    build_database, decode_postings, encode_postings, CaptionIndex, IndexKind, IndexParams, VectorIndex,
};
use tag_core::tensor_store::{AlignedTextTable, Matrix};

fn gaussian(seed: u64, n: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn index(rows: &[f32], dim: usize, params: &IndexParams) -> CaptionIndex {
    let n = rows.len() / dim;
    let table = AlignedTextTable::from_texts(
        (0..n).map(|i| format!("row {i}")),
        "test",
        Matrix::new(n, dim, rows.to_vec()).unwrap(),
    )
    .unwrap();
    CaptionIndex::build(build_database(table).unwrap(), params).unwrap()
}

fn ivf(lists: usize, probe: usize) -> IndexParams {
    IndexParams {
        kind: IndexKind::Ivf,
        lists: Some(lists),
        probe: Some(probe),
        seed: 0,
    }
}

/// Double-precision cosine ranking of the raw rows.
fn brute(rows: &[f32], dim: usize, q: &[f32], n: usize) -> Vec<u32> {
    let norm = |v: &[f32]| v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let mut s: Vec<(f64, u32)> = rows
        .chunks(dim)
        .enumerate()
        .map(|(i, r)| {
            let d: f64 = r.iter().zip(q).map(|(&a, &b)| a as f64 * b as f64).sum();
            (d / (norm(r) * norm(q)), i as u32)
        })
        .collect();
    s.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    s.truncate(n);
    s.into_iter().map(|(_, i)| i).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exact_matches_brute_force(seed in 0u64..10_000, n in 1usize..300, dim in 1usize..12, top in 1usize..20) {
        let rows = gaussian(seed, n * dim);
        let q = gaussian(seed + 1, dim);
        let idx = index(&rows, dim, &IndexParams::default());
        let got = idx.top_n(&q, top).unwrap();
        prop_assert_eq!(got.ids(), brute(&rows, dim, &q, top));
        prop_assert!(got.hits.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn full_probe_equals_exact(seed in 0u64..10_000, n in 20usize..400, lists in 1usize..12) {
        let dim = 6;
        let rows = gaussian(seed, n * dim);
        let exact = index(&rows, dim, &IndexParams::default());
        let approx = index(&rows, dim, &ivf(lists, lists));
        for q in gaussian(seed + 7, 5 * dim).chunks(dim) {
            prop_assert_eq!(approx.top_n(q, 10).unwrap(), exact.top_n(q, 10).unwrap());
        }
    }

    #[test]
    fn postings_round_trip(lists in prop::collection::vec(prop::collection::btree_set(0u32..100_000, 0..40), 1..10)) {
        let lists: Vec<Vec<u32>> = lists.into_iter().map(|s| s.into_iter().collect()).collect();
        prop_assert_eq!(decode_postings(&encode_postings(&lists)).unwrap(), lists);
    }
}

#[test]
fn lists_partition_row_ids() {
    let dim = 8;
    let rows = gaussian(3, 1000 * dim);
    let idx = index(&rows, dim, &ivf(16, 2));
    let VectorIndex::InvertedLists { lists, .. } = idx.index() else {
        panic!("expected inverted lists");
    };
    assert_eq!(lists.len(), 16);
    let mut all: Vec<u32> = lists.iter().flatten().copied().collect();
    all.sort();
    assert_eq!(all, (0..1000).collect::<Vec<u32>>());
}

#[test]
fn single_list_is_exact_for_any_probe() {
    let dim = 5;
    let rows = gaussian(4, 300 * dim);
    let exact = index(&rows, dim, &IndexParams::default());
    let one = index(&rows, dim, &ivf(1, 1));
    for q in gaussian(5, 10 * dim).chunks(dim) {
        assert_eq!(one.top_n(q, 7).unwrap(), exact.top_n(q, 7).unwrap());
    }
}

#[test]
fn default_list_and_probe_counts() {
    let dim = 4;
    let rows = gaussian(6, 1000 * dim);
    let idx = index(&rows, dim, &IndexParams { kind: IndexKind::Ivf, ..Default::default() });
    assert_eq!(idx.index().list_count(), 32);
    assert_eq!(idx.probe(), 4);
}

#[test]
fn saved_index_answers_identically() {
    let dir = tempfile::tempdir().unwrap();
    let dim = 6;
    let rows = gaussian(8, 500 * dim);
    for params in [IndexParams::default(), ivf(10, 3)] {
        let idx = index(&rows, dim, &params);
        idx.save(dir.path()).unwrap();
        let back = CaptionIndex::load(dir.path()).unwrap();
        for q in gaussian(9, 20 * dim).chunks(dim) {
            assert_eq!(back.top_n(q, 10).unwrap(), idx.top_n(q, 10).unwrap());
        }
    }
}

#[test]
fn batch_search_matches_single_queries() {
    let dim = 6;
    let rows = gaussian(10, 400 * dim);
    let idx = index(&rows, dim, &ivf(8, 2));
    let queries: Vec<Vec<f32>> = gaussian(11, 30 * dim).chunks(dim).map(<[f32]>::to_vec).collect();
    let batch = tag_core::caption_index::batch_top_n(&idx, &queries, 5).unwrap();
    for (q, got) in queries.iter().zip(batch) {
        assert_eq!(got, idx.top_n(q, 5).unwrap());
    }
}
