//! Where do the longest relevant documents land in a ranking?
//!
//! A synthetic run that ranks long documents low, summarised as normalised-rank
//! histograms for the shortest and longest 20% of relevant documents.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use length_collapse::metrics::{mean_rank_of_longest, ranking_position_histogram, RankedDoc, RankingRun};
use length_collapse::rng;
use rand::Rng;

fn main() {
    let mut r = rng::seeded(21);
    let mut rankings = BTreeMap::new();
    let mut qrels = BTreeMap::new();
    let mut lengths = HashMap::new();
    for q in 0..40 {
        let qid = format!("q{q}");
        let mut list = Vec::new();
        let mut relevant = BTreeSet::new();
        for rank in 1..=50 {
            let doc = format!("q{q}d{rank}");
            // lengths grow with rank, plus noise
            lengths.insert(doc.clone(), 20 * rank + r.random_range(0..400));
            if r.random_range(0.0..1.0) < 0.2 {
                relevant.insert(doc.clone());
            }
            list.push(RankedDoc {
                doc_id: doc,
                rank,
                score: 1.0 / rank as f64,
            });
        }
        rankings.insert(qid.clone(), list);
        qrels.insert(qid, relevant);
    }
    let run = RankingRun::new(rankings, qrels, lengths).unwrap();

    let h = ranking_position_histogram(&run, 0.2, 10).unwrap();
    println!("{:>10} {:>6} {:>6}", "bin", "short", "long");
    for ((lo, hi, s), (_, _, l)) in h.short.rows().into_iter().zip(h.long.rows()) {
        println!("({lo:.1},{hi:.1}] {s:>6} {l:>6}");
    }
    let longest = mean_rank_of_longest(&run, 0.2).unwrap();
    println!("mean rank of the longest 20%: {:.2}", longest.mean_rank);
}
