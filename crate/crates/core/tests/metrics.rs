mod common;

use std::io::Cursor;

use length_collapse::metrics::{
    centroid_distance_by_bucket, cosine_lower_bound, mean_rank_of_longest, pairwise_cosine_by_bucket,
    ranking_position_histogram, read_doc_lengths, read_embeddings, read_qrels, read_run, BucketSpec, EmbeddingRecord,
    MetricsError, RankingRun,
};
use proptest::prelude::*;

fn records(planted: &[common::PlantedRecord]) -> Vec<EmbeddingRecord> {
    read_embeddings(Cursor::new(common::embeddings_jsonl(planted))).unwrap()
}

fn load_run(p: &common::PlantedRun) -> RankingRun {
    RankingRun::new(
        read_run(Cursor::new(p.run_text())).unwrap(),
        read_qrels(Cursor::new(p.qrels_text())).unwrap(),
        read_doc_lengths(Cursor::new(p.lengths_text())).unwrap(),
    )
    .unwrap()
}

#[test]
fn bucketed_cosine_matches_enumeration() {
    let planted = common::planted_embeddings(11, 300, 16, 500);
    let edges = vec![0, 100, 200, 300, 400, 501];
    let got = pairwise_cosine_by_bucket(&records(&planted), &BucketSpec::new(edges.clone()).unwrap()).unwrap();
    assert_eq!(got.out_of_range, 0);
    assert!(got.rejected.is_empty());
    for (row, w) in got.rows.iter().zip(edges.windows(2)) {
        let members: Vec<Vec<f64>> = planted
            .iter()
            .filter(|r| w[0] <= r.length && r.length < w[1])
            .map(|r| r.vector.clone())
            .collect();
        assert_eq!(row.count, members.len());
        let (mean, std, _) = common::brute_pair_stats(&members).unwrap();
        assert!((row.mean_cos.unwrap() - mean).abs() <= 1e-12, "{row:?} vs {mean}");
        assert!((row.std_cos.unwrap() - std).abs() <= 1e-12);
    }
    let means: Vec<f64> = got.rows.iter().map(|r| r.mean_cos.unwrap()).collect();
    assert!(means.windows(2).all(|w| w[1] > w[0]), "planted drift not recovered: {means:?}");
}

#[test]
fn centroid_distance_matches_loops() {
    let planted = common::planted_embeddings(12, 120, 8, 300);
    let edges = vec![50, 150, 250];
    let got = centroid_distance_by_bucket(&records(&planted), &BucketSpec::new(edges.clone()).unwrap()).unwrap();
    let mut centroid = vec![0.0; 8];
    for r in &planted {
        for (c, v) in centroid.iter_mut().zip(&r.vector) {
            *c += v / planted.len() as f64;
        }
    }
    for (a, b) in got.centroid.iter().zip(&centroid) {
        assert!((a - b).abs() <= 1e-12);
    }
    let outside = planted.iter().filter(|r| r.length < 50 || r.length >= 250).count();
    assert_eq!(got.out_of_range, outside);
    for (row, w) in got.rows.iter().zip(edges.windows(2)) {
        let dists: Vec<f64> = planted
            .iter()
            .filter(|r| w[0] <= r.length && r.length < w[1])
            .map(|r| r.vector.iter().zip(&centroid).map(|(v, c)| (v - c).powi(2)).sum::<f64>().sqrt())
            .collect();
        assert_eq!(row.count, dists.len());
        let mean = dists.iter().sum::<f64>() / dists.len() as f64;
        assert!((row.mean_distance.unwrap() - mean).abs() <= 1e-12);
    }
}

#[test]
fn zero_vectors_are_rejected_not_bucketed() {
    let mut recs = records(&common::planted_embeddings(3, 10, 4, 50));
    recs[4].vector = vec![0.0; 4];
    let got = pairwise_cosine_by_bucket(&recs, &BucketSpec::new(vec![0, 1000]).unwrap()).unwrap();
    assert_eq!(got.rejected, vec![recs[4].id.clone()]);
    assert_eq!(got.rows[0].count, 9);
}

#[test]
fn identical_embeddings_give_unit_cosine() {
    let rec = |i: usize| EmbeddingRecord {
        id: format!("x{i}"),
        length: 10 + i,
        vector: vec![0.3, -1.2, 4.0],
    };
    let recs: Vec<_> = (0..5).map(rec).collect();
    let got = pairwise_cosine_by_bucket(&recs, &BucketSpec::new(vec![0, 100]).unwrap()).unwrap();
    assert_eq!(got.rows[0].mean_cos, Some(1.0));
    assert_eq!(got.rows[0].std_cos, Some(0.0));
}

#[test]
fn buckets_partition_the_records() {
    let planted = common::planted_embeddings(5, 200, 4, 700);
    let got = pairwise_cosine_by_bucket(&records(&planted), &BucketSpec::new(vec![0, 100, 250, 600]).unwrap()).unwrap();
    let total: usize = got.rows.iter().map(|r| r.count).sum();
    assert_eq!(total + got.out_of_range, planted.len());
    assert!(got.out_of_range > 0);
}

#[test]
fn reader_errors_carry_line_numbers() {
    let text = "{\"id\":\"a\",\"length\":3,\"vector\":[1,2]}\n\n{\"id\":\"b\",\"length\":3,\"vector\":[1,\n";
    match read_embeddings(Cursor::new(text)) {
        Err(MetricsError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    let mismatch = "{\"id\":\"a\",\"length\":3,\"vector\":[1,2]}\n{\"id\":\"b\",\"length\":3,\"vector\":[1]}\n";
    let recs = read_embeddings(Cursor::new(mismatch));
    let err = recs.and_then(|r| pairwise_cosine_by_bucket(&r, &BucketSpec::new(vec![0, 9]).unwrap()));
    assert!(matches!(err, Err(MetricsError::DimensionMismatch { ref id, .. }) if id == "b"), "{err:?}");
}

#[test]
fn ranking_histograms_match_recount() {
    for seed in 0..6 {
        let planted = common::planted_run(seed, 25, 40);
        let run = load_run(&planted);
        for (p, bins) in [(0.2, 10), (0.5, 7), (0.05, 3)] {
            let got = ranking_position_histogram(&run, p, bins).unwrap();
            let (short, long) = planted.cohorts(p);
            let (sc, su) = planted.recount(&short, bins);
            let (lc, lu) = planted.recount(&long, bins);
            assert_eq!((got.short.counts.clone(), got.short.unranked), (sc, su));
            assert_eq!((got.long.counts.clone(), got.long.unranked), (lc, lu));
            assert_eq!(got.short.cohort_size, short.len());
            assert_eq!(got.long.counts.iter().sum::<usize>() + got.long.unranked, long.len());

            let mr = mean_rank_of_longest(&run, p).unwrap();
            assert_eq!(mr.mean_rank, planted.mean_rank(&long).unwrap());
            assert_eq!(mr.ranked + mr.unranked, long.len());
        }
    }
}

#[test]
fn planted_long_documents_sink() {
    let planted = common::planted_run(42, 60, 30);
    let run = load_run(&planted);
    let h = ranking_position_histogram(&run, 0.2, 10).unwrap();
    let top_half = |c: &[usize]| c[..5].iter().sum::<usize>();
    assert!(top_half(&h.long.counts) < top_half(&h.short.counts));
}

#[test]
fn ranking_rejects_bad_arguments() {
    let run = load_run(&common::planted_run(1, 3, 10));
    assert!(matches!(ranking_position_histogram(&run, 0.2, 0), Err(MetricsError::InvalidArgument(_))));
    assert!(ranking_position_histogram(&run, 0.0, 10).is_err());
    assert!(ranking_position_histogram(&run, 0.6, 10).is_err());
}

proptest! {
    #[test]
    fn cosine_lower_bound_decreases_with_either_hc(
        alpha in 0.01..10.0f64,
        a1 in 0.0..10.0f64,
        a2 in 0.0..10.0f64,
        bump in 0.001..5.0f64,
    ) {
        let base = cosine_lower_bound(alpha, a1, a2).unwrap();
        prop_assert!(base > 0.0 && base <= 1.0);
        prop_assert!(cosine_lower_bound(alpha, a1 + bump, a2).unwrap() < base);
        prop_assert!(cosine_lower_bound(alpha, a1, a2 + bump).unwrap() < base);
        prop_assert!(cosine_lower_bound(alpha * (1.0 + bump), a1, a2).unwrap() >= base);
    }

    #[test]
    fn cosine_lower_bound_holds_for_shared_dc(
        alpha in 0.1..5.0f64,
        h1 in prop::collection::vec(-3.0..3.0f64, 4),
        h2 in prop::collection::vec(-3.0..3.0f64, 4),
    ) {
        // u = alpha e0 + h1, v = alpha e0 + h2, both h orthogonal to e0
        let mut u = vec![alpha, 0.0, 0.0, 0.0, 0.0];
        let mut v = u.clone();
        u[1..].copy_from_slice(&h1);
        v[1..].copy_from_slice(&h2);
        let n1 = h1.iter().map(|x| x * x).sum::<f64>().sqrt();
        let n2 = h2.iter().map(|x| x * x).sum::<f64>().sqrt();
        let bound = cosine_lower_bound(alpha, n1, n2).unwrap();
        let actual = common::brute_cosine(&u, &v);
        // the bound assumes the HC parts do not anti-align beyond the DC share
        let hc_dot: f64 = h1.iter().zip(&h2).map(|(a, b)| a * b).sum();
        if hc_dot >= 0.0 {
            prop_assert!(actual + 1e-12 >= bound, "{actual} < {bound}");
        }
    }
}
