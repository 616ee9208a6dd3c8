//! Where do relevant short and long documents land in a ranking?
//!
//! All relevant `(query, doc)` pairs are pooled and ordered by document length
//! (ties by doc id, then query id). The shortest and longest `ceil(p * N)`
//! pairs form the two cohorts. Each ranked pair contributes its normalised rank
//! `rank / list_length` to a histogram with bins `(b/bins, (b+1)/bins]`;
//! pairs absent from the run are counted as unranked.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::MetricsError;
use crate::table::Table;

/// A (query id, document id) pair.
type Pair<'a> = (&'a str, &'a str);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedDoc {
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
}

const SCORE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RankingRun {
    rankings: BTreeMap<String, Vec<RankedDoc>>,
    qrels: BTreeMap<String, BTreeSet<String>>,
    doc_lengths: HashMap<String, usize>,
}

impl RankingRun {
    /// Sorts each query's list by rank and validates it: ranks start at 1 or
    /// later and strictly increase, scores do not increase (within 1e-9), and
    /// every relevant document has a known length.
    pub fn new(
        mut rankings: BTreeMap<String, Vec<RankedDoc>>,
        qrels: BTreeMap<String, BTreeSet<String>>,
        doc_lengths: HashMap<String, usize>,
    ) -> Result<Self, MetricsError> {
        let invalid = |m: String| Err(MetricsError::InvalidRanking(m));
        for (qid, list) in rankings.iter_mut() {
            list.sort_by_key(|d| d.rank);
            if list.first().is_some_and(|d| d.rank == 0) {
                return invalid(format!("query {qid}: ranks are 1-based"));
            }
            for w in list.windows(2) {
                if w[0].rank == w[1].rank {
                    return invalid(format!("query {qid}: rank {} appears twice", w[0].rank));
                }
                if w[1].score > w[0].score + SCORE_TOL {
                    return invalid(format!(
                        "query {qid}: score rises from {} at rank {} to {} at rank {}",
                        w[0].score, w[0].rank, w[1].score, w[1].rank
                    ));
                }
            }
        }
        for docs in qrels.values() {
            if let Some(doc) = docs.iter().find(|d| !doc_lengths.contains_key(*d)) {
                return invalid(format!("relevant document {doc} has no known length"));
            }
        }
        Ok(Self {
            rankings,
            qrels,
            doc_lengths,
        })
    }

    pub fn rankings(&self) -> &BTreeMap<String, Vec<RankedDoc>> {
        &self.rankings
    }

    pub fn qrels(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.qrels
    }

    pub fn doc_length(&self, doc: &str) -> Option<usize> {
        self.doc_lengths.get(doc).copied()
    }

    /// Rank of `doc` for `qid` and the list length (the last rank in the list).
    fn position(&self, qid: &str, doc: &str) -> Option<(usize, usize)> {
        let list = self.rankings.get(qid)?;
        let hit = list.iter().find(|d| d.doc_id == doc)?;
        Some((hit.rank, list.last()?.rank))
    }

    fn cohorts(&self, percentile: f64) -> Result<(Vec<Pair<'_>>, Vec<Pair<'_>>), MetricsError> {
        if !(percentile > 0.0 && percentile <= 0.5) {
            return Err(MetricsError::InvalidArgument(format!(
                "percentile {percentile} must lie in (0, 0.5]"
            )));
        }
        let mut pairs: Vec<(usize, &str, &str)> = self
            .qrels
            .iter()
            .flat_map(|(q, docs)| docs.iter().map(move |d| (q.as_str(), d.as_str())))
            .map(|(q, d)| (self.doc_lengths[d], d, q))
            .collect();
        pairs.sort();
        let k = (percentile * pairs.len() as f64).ceil() as usize;
        let short = pairs[..k].iter().map(|&(_, d, q)| (q, d)).collect();
        let long = pairs[pairs.len() - k..].iter().map(|&(_, d, q)| (q, d)).collect();
        Ok((short, long))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortHistogram {
    pub counts: Vec<usize>,
    pub unranked: usize,
    pub cohort_size: usize,
}

impl CohortHistogram {
    fn build(run: &RankingRun, cohort: &[(&str, &str)], bins: usize) -> Self {
        let mut counts = vec![0; bins];
        let mut unranked = 0;
        for &(q, d) in cohort {
            match run.position(q, d) {
                // ceil(rank * bins / len) - 1, in integers
                Some((rank, len)) => counts[(rank * bins).div_ceil(len) - 1] += 1,
                None => unranked += 1,
            }
        }
        Self {
            counts,
            unranked,
            cohort_size: cohort.len(),
        }
    }

    /// `(bin_lo, bin_hi, count)` with bins `(lo, hi]` over normalised rank.
    pub fn rows(&self) -> Vec<(f64, f64, usize)> {
        let bins = self.counts.len() as f64;
        self.counts
            .iter()
            .enumerate()
            .map(|(b, &c)| (b as f64 / bins, (b + 1) as f64 / bins, c))
            .collect()
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["bin_lo", "bin_hi", "count"]);
        for (lo, hi, c) in self.rows() {
            t.push(vec![lo.into(), hi.into(), c.into()]);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionHistograms {
    pub short: CohortHistogram,
    pub long: CohortHistogram,
}

pub fn ranking_position_histogram(
    run: &RankingRun,
    percentile: f64,
    bins: usize,
) -> Result<PositionHistograms, MetricsError> {
    if bins == 0 {
        return Err(MetricsError::InvalidArgument("bins must be >= 1".into()));
    }
    let (short, long) = run.cohorts(percentile)?;
    Ok(PositionHistograms {
        short: CohortHistogram::build(run, &short, bins),
        long: CohortHistogram::build(run, &long, bins),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LongestRank {
    pub mean_rank: f64,
    pub ranked: usize,
    pub unranked: usize,
}

/// Mean raw rank of the longest `percentile` of relevant documents. Unranked
/// documents are excluded from the mean and counted separately.
pub fn mean_rank_of_longest(run: &RankingRun, percentile: f64) -> Result<LongestRank, MetricsError> {
    let (_, long) = run.cohorts(percentile)?;
    let ranks: Vec<usize> = long.iter().filter_map(|&(q, d)| run.position(q, d)).map(|(r, _)| r).collect();
    if ranks.is_empty() {
        return Err(MetricsError::InvalidRanking(
            "none of the longest relevant documents appear in the run".into(),
        ));
    }
    Ok(LongestRank {
        mean_rank: ranks.iter().sum::<usize>() as f64 / ranks.len() as f64,
        ranked: ranks.len(),
        unranked: long.len() - ranks.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_of(entries: &[(&str, &str, usize)], rel: &[(&str, &str)], lengths: &[(&str, usize)]) -> RankingRun {
        let mut rankings: BTreeMap<String, Vec<RankedDoc>> = BTreeMap::new();
        for &(q, d, r) in entries {
            rankings.entry(q.into()).or_default().push(RankedDoc {
                doc_id: d.into(),
                rank: r,
                score: -(r as f64),
            });
        }
        let mut qrels: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for &(q, d) in rel {
            qrels.entry(q.into()).or_default().insert(d.into());
        }
        let lengths = lengths.iter().map(|&(d, l)| (d.to_string(), l)).collect();
        RankingRun::new(rankings, qrels, lengths).unwrap()
    }

    #[test]
    fn top_ranked_doc_lands_in_first_bin() {
        let entries: Vec<(&str, &str, usize)> = (1..=10)
            .map(|r| ("q1", ["d1", "d2", "d3", "d4", "d5", "d6", "d7", "d8", "d9", "d10"][r - 1], r))
            .collect();
        let run = run_of(&entries, &[("q1", "d1")], &[("d1", 50)]);
        let h = ranking_position_histogram(&run, 0.2, 10).unwrap();
        assert_eq!(h.short.counts[0], 1);
        assert_eq!(h.short.counts.iter().sum::<usize>(), 1);
        assert_eq!(h.long.counts[0], 1);
    }

    #[test]
    fn missing_doc_is_unranked() {
        let run = run_of(&[("q1", "a", 1)], &[("q1", "b")], &[("b", 3)]);
        let h = ranking_position_histogram(&run, 0.5, 4).unwrap();
        assert_eq!(h.short.unranked, 1);
        assert_eq!(h.short.counts.iter().sum::<usize>(), 0);
        assert!(mean_rank_of_longest(&run, 0.5).is_err());
    }

    #[test]
    fn exact_bin_edges_use_integer_arithmetic() {
        // rank 3 of 10 with 10 bins is exactly 0.3, the upper edge of bin 2.
        let docs = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];
        let entries: Vec<_> = docs.iter().enumerate().map(|(i, d)| ("q", *d, i + 1)).collect();
        let run = run_of(&entries, &[("q", "c")], &[("c", 1)]);
        let h = ranking_position_histogram(&run, 0.5, 10).unwrap();
        assert_eq!(h.short.counts[2], 1);
    }

    #[test]
    fn mean_rank_examples() {
        let run = run_of(
            &[("q1", "a", 1), ("q2", "b", 1)],
            &[("q1", "a"), ("q2", "b")],
            &[("a", 10), ("b", 20)],
        );
        assert_eq!(mean_rank_of_longest(&run, 0.5).unwrap().mean_rank, 1.0);

        let mut entries = vec![];
        let names: Vec<String> = (1..=20).map(|i| format!("x{i}")).collect();
        for (i, n) in names.iter().enumerate() {
            entries.push(("q1", n.as_str(), i + 1));
        }
        let run = run_of(&entries, &[("q1", "x10"), ("q1", "x20")], &[("x10", 100), ("x20", 100)]);
        let lr = mean_rank_of_longest(&run, 0.5).unwrap();
        assert_eq!(lr.ranked, 1);
        // Two docs tie on length; "x20" > "x10" lexicographically, so it is the longest.
        assert_eq!(lr.mean_rank, 20.0);
    }

    #[test]
    fn validation_errors() {
        let mut rankings = BTreeMap::new();
        rankings.insert(
            "q".to_string(),
            vec![
                RankedDoc { doc_id: "a".into(), rank: 1, score: 1.0 },
                RankedDoc { doc_id: "b".into(), rank: 2, score: 2.0 },
            ],
        );
        assert!(RankingRun::new(rankings.clone(), BTreeMap::new(), HashMap::new()).is_err());
        rankings.get_mut("q").unwrap()[1].rank = 1;
        rankings.get_mut("q").unwrap()[1].score = 0.5;
        assert!(RankingRun::new(rankings, BTreeMap::new(), HashMap::new()).is_err());

        let mut qrels = BTreeMap::new();
        qrels.insert("q".to_string(), BTreeSet::from(["zz".to_string()]));
        assert!(RankingRun::new(BTreeMap::new(), qrels, HashMap::new()).is_err());
    }

    #[test]
    fn percentile_bounds() {
        let run = run_of(&[("q", "a", 1)], &[("q", "a")], &[("a", 1)]);
        assert!(ranking_position_histogram(&run, 0.0, 10).is_err());
        assert!(ranking_position_histogram(&run, 0.6, 10).is_err());
        assert!(ranking_position_histogram(&run, 0.5, 0).is_err());
    }
}
