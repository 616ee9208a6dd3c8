//! Bucketed cosine and centroid distance over embeddings read from JSON Lines.
//!
//! Builds a small synthetic file in memory whose vectors drift toward a shared
//! axis as length grows, then reads it back the way `lclab diagnose
//! embeddings` does.

use std::io::Cursor;

use length_collapse::metrics::{centroid_distance_by_bucket, pairwise_cosine_by_bucket, read_embeddings, BucketSpec};
use length_collapse::rng;
use rand::Rng;

fn main() {
    let mut r = rng::seeded(5);
    let mut jsonl = String::new();
    for i in 0..400 {
        let length: usize = r.random_range(1..500);
        let pull = 4.0 * length as f64 / 500.0;
        let v: Vec<String> = (0..8)
            .map(|j| {
                let x = rng::standard_normal(&mut r) + if j == 0 { pull } else { 0.0 };
                format!("{x}")
            })
            .collect();
        jsonl.push_str(&format!("{{\"id\":\"doc{i}\",\"length\":{length},\"vector\":[{}]}}\n", v.join(",")));
    }

    let records = read_embeddings(Cursor::new(jsonl)).unwrap();
    let buckets = BucketSpec::new(vec![0, 100, 200, 300, 400, 500]).unwrap();
    print!("{}", pairwise_cosine_by_bucket(&records, &buckets).unwrap().to_table().to_csv_string());
    println!();
    print!("{}", centroid_distance_by_bucket(&records, &buckets).unwrap().to_table().to_csv_string());
}
