//! Length-collapse diagnostics over embeddings from any source.
//!
//! Records are grouped into half-open length buckets `[lo, hi)`. Within a
//! bucket we report the mean pairwise cosine similarity (self-pairs excluded)
//! and the mean Euclidean distance to the centroid of the whole dataset.

mod io;
mod ranking;

pub use io::{read_doc_lengths, read_embeddings, read_qrels, read_run};
pub use ranking::{
    mean_rank_of_longest, ranking_position_histogram, CohortHistogram, LongestRank, PositionHistograms, RankedDoc,
    RankingRun,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::Table;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("record {id:?} has dimension {found}, expected {expected}")]
    DimensionMismatch { id: String, expected: usize, found: usize },
    #[error("record {id:?} is invalid: {message}")]
    InvalidRecord { id: String, message: String },
    #[error("invalid bucket edges: {0}")]
    InvalidBuckets(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid ranking run: {0}")]
    InvalidRanking(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub length: usize,
    pub vector: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let invalid = |message: &str| MetricsError::InvalidRecord {
            id: self.id.clone(),
            message: message.into(),
        };
        if self.length == 0 {
            return Err(invalid("length must be >= 1"));
        }
        if self.vector.is_empty() {
            return Err(invalid("vector is empty"));
        }
        if self.vector.iter().any(|v| !v.is_finite()) {
            return Err(invalid("vector has non-finite entries"));
        }
        Ok(())
    }
}

/// Checks every record and that all share the first record's dimension.
pub fn validate_records(records: &[EmbeddingRecord]) -> Result<usize, MetricsError> {
    let first = records.first().ok_or(MetricsError::EmptyDataset)?;
    let dim = first.vector.len();
    for r in records {
        r.validate()?;
        if r.vector.len() != dim {
            return Err(MetricsError::DimensionMismatch {
                id: r.id.clone(),
                expected: dim,
                found: r.vector.len(),
            });
        }
    }
    Ok(dim)
}

/// Strictly increasing length edges defining buckets `[edges[i], edges[i+1])`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BucketSpec {
    edges: Vec<usize>,
}

impl BucketSpec {
    pub fn new(edges: Vec<usize>) -> Result<Self, MetricsError> {
        if edges.len() < 2 {
            return Err(MetricsError::InvalidBuckets(format!("need at least 2 edges, got {}", edges.len())));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MetricsError::InvalidBuckets(format!("edges {edges:?} are not strictly increasing")));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bounds(&self, bucket: usize) -> (usize, usize) {
        (self.edges[bucket], self.edges[bucket + 1])
    }

    /// `None` when `length` falls outside every bucket.
    pub fn bucket_of(&self, length: usize) -> Option<usize> {
        if length < self.edges[0] || length >= *self.edges.last().unwrap() {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= length) - 1)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

// sqrt(|u|^2 |v|^2) rather than |u| |v|: exact for u == v, so self-similar
// vectors give a cosine of exactly 1.
fn cosine_from(dot: f64, sq_u: f64, sq_v: f64) -> f64 {
    (dot / (sq_u * sq_v).sqrt()).clamp(-1.0, 1.0)
}

pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    cosine_from(dot(u, v), dot(u, u), dot(v, v))
}

/// Summary of cosine similarity over all unordered pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairStats {
    pub mean: f64,
    /// Population standard deviation over pairs.
    pub std: f64,
    pub pairs: usize,
}

/// Mean and std of `cos(v_i, v_j)` over `i < j`. NaN statistics when fewer
/// than two vectors are given.
pub fn pairwise_cosine_stats<V: AsRef<[f64]>>(vectors: &[V]) -> PairStats {
    let squares: Vec<f64> = vectors.iter().map(|v| dot(v.as_ref(), v.as_ref())).collect();
    let mut cosines = Vec::with_capacity(vectors.len() * vectors.len().saturating_sub(1) / 2);
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            let d = dot(vectors[i].as_ref(), vectors[j].as_ref());
            cosines.push(cosine_from(d, squares[i], squares[j]));
        }
    }
    let pairs = cosines.len();
    if pairs == 0 {
        return PairStats {
            mean: f64::NAN,
            std: f64::NAN,
            pairs,
        };
    }
    let mean = cosines.iter().sum::<f64>() / pairs as f64;
    let var = cosines.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / pairs as f64;
    PairStats {
        mean,
        std: var.sqrt(),
        pairs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketCosineRow {
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
    /// `None` when the bucket holds fewer than two records.
    pub mean_cos: Option<f64>,
    pub std_cos: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketedCosine {
    pub rows: Vec<BucketCosineRow>,
    pub out_of_range: usize,
    /// Ids of zero-norm records, excluded from every bucket.
    pub rejected: Vec<String>,
}

impl BucketedCosine {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["bucket_lo", "bucket_hi", "count", "mean_cos", "std_cos"]);
        for r in &self.rows {
            t.push(vec![r.lo.into(), r.hi.into(), r.count.into(), r.mean_cos.into(), r.std_cos.into()]);
        }
        t
    }
}

fn group_by_bucket<'a>(
    records: impl Iterator<Item = &'a EmbeddingRecord>,
    buckets: &BucketSpec,
) -> (Vec<Vec<&'a EmbeddingRecord>>, usize) {
    let mut groups = vec![Vec::new(); buckets.len()];
    let mut out_of_range = 0;
    for r in records {
        match buckets.bucket_of(r.length) {
            Some(b) => groups[b].push(r),
            None => out_of_range += 1,
        }
    }
    (groups, out_of_range)
}

pub fn pairwise_cosine_by_bucket(
    records: &[EmbeddingRecord],
    buckets: &BucketSpec,
) -> Result<BucketedCosine, MetricsError> {
    if !records.is_empty() {
        validate_records(records)?;
    }
    let rejected: Vec<String> = records
        .iter()
        .filter(|r| norm(&r.vector) == 0.0)
        .map(|r| r.id.clone())
        .collect();
    let accepted = records.iter().filter(|r| norm(&r.vector) > 0.0);
    let (groups, out_of_range) = group_by_bucket(accepted, buckets);
    let rows = groups
        .iter()
        .enumerate()
        .map(|(b, group)| {
            let (lo, hi) = buckets.bounds(b);
            let vectors: Vec<&[f64]> = group.iter().map(|r| r.vector.as_slice()).collect();
            let stats = (vectors.len() >= 2).then(|| pairwise_cosine_stats(&vectors));
            BucketCosineRow {
                lo,
                hi,
                count: group.len(),
                mean_cos: stats.map(|s| s.mean),
                std_cos: stats.map(|s| s.std),
            }
        })
        .collect();
    Ok(BucketedCosine {
        rows,
        out_of_range,
        rejected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketDistanceRow {
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
    pub mean_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketedDistance {
    pub rows: Vec<BucketDistanceRow>,
    pub out_of_range: usize,
    pub centroid: Vec<f64>,
}

impl BucketedDistance {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["bucket_lo", "bucket_hi", "count", "mean_distance"]);
        for r in &self.rows {
            t.push(vec![r.lo.into(), r.hi.into(), r.count.into(), r.mean_distance.into()]);
        }
        t
    }
}

/// Mean `||v - c||_2` per bucket, `c` being the mean of every record in the dataset.
pub fn centroid_distance_by_bucket(
    records: &[EmbeddingRecord],
    buckets: &BucketSpec,
) -> Result<BucketedDistance, MetricsError> {
    let dim = validate_records(records)?;
    let mut centroid = vec![0.0; dim];
    for r in records {
        centroid.iter_mut().zip(&r.vector).for_each(|(c, v)| *c += v);
    }
    centroid.iter_mut().for_each(|c| *c /= records.len() as f64);

    let (groups, out_of_range) = group_by_bucket(records.iter(), buckets);
    let rows = groups
        .iter()
        .enumerate()
        .map(|(b, group)| {
            let (lo, hi) = buckets.bounds(b);
            let total: f64 = group
                .iter()
                .map(|r| {
                    let diff: Vec<f64> = r.vector.iter().zip(&centroid).map(|(v, c)| v - c).collect();
                    norm(&diff)
                })
                .sum();
            BucketDistanceRow {
                lo,
                hi,
                count: group.len(),
                mean_distance: (!group.is_empty()).then(|| total / group.len() as f64),
            }
        })
        .collect();
    Ok(BucketedDistance {
        rows,
        out_of_range,
        centroid,
    })
}

/// Lower bound on the cosine of two embeddings sharing a DC magnitude `alpha`
/// with HC magnitudes `alpha1`, `alpha2`:
/// `alpha^2 / (sqrt(alpha^2 + alpha1^2) sqrt(alpha^2 + alpha2^2))`.
pub fn cosine_lower_bound(alpha: f64, alpha1: f64, alpha2: f64) -> Result<f64, MetricsError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(MetricsError::InvalidArgument(format!("alpha={alpha} must be positive")));
    }
    if !(alpha1 >= 0.0 && alpha2 >= 0.0) {
        return Err(MetricsError::InvalidArgument(format!(
            "alpha1={alpha1} and alpha2={alpha2} must be nonnegative"
        )));
    }
    let a2 = alpha * alpha;
    Ok(a2 / ((a2 + alpha1 * alpha1).sqrt() * (a2 + alpha2 * alpha2).sqrt()))
}
