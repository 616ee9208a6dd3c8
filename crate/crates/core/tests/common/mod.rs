//! Independent oracles shared by the integration tests. Nothing here calls the
//! library routine it is used to check.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use length_collapse::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A (query id, document id) pair.
pub type QrelPair = (String, String);

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

// ------------------------------------------------------------- linear algebra

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(sym: &DMatrix<f64>) -> Vec<f64> {
    let n = sym.nrows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| sym[(i, j)]).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// Largest singular value via Jacobi on the smaller Gram matrix.
pub fn jacobi_spectral_norm(m: &DMatrix<f64>) -> f64 {
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    jacobi_eigenvalues(&gram).into_iter().fold(0.0, f64::max).sqrt()
}

/// `A^t` by binary exponentiation.
pub fn matrix_power(a: &DMatrix<f64>, mut t: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let mut result = DMatrix::identity(n, n);
    let mut base = a.clone();
    while t > 0 {
        if t & 1 == 1 {
            result = &result * &base;
        }
        base = &base * &base;
        t >>= 1;
    }
    result
}

/// HC/DC norm ratio of a signal by explicit loops.
pub fn ratio_of(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let hc: f64 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>().sqrt();
    let dc = (n * mean * mean).sqrt();
    hc / dc
}

/// `sqrt(sum (x_ij - mean_j)^2)` by loops: the Frobenius norm of the centred matrix.
pub fn centred_frobenius(m: &DMatrix<f64>) -> f64 {
    let (rows, cols) = m.shape();
    let mut total = 0.0;
    for j in 0..cols {
        let mean = (0..rows).map(|i| m[(i, j)]).sum::<f64>() / rows as f64;
        total += (0..rows).map(|i| (m[(i, j)] - mean).powi(2)).sum::<f64>();
    }
    total.sqrt()
}

/// Explicit centring matrix `I - 11^T / n`.
pub fn centring_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64)
}

// ------------------------------------------------------------------- fourier

/// Direct `O(n^2)` sum `sum_m x[m] e^{+2 pi i k m / n} / sqrt(n)` (the DFT
/// matrix applied to `x`), returned as `(re, im)` pairs.
pub fn brute_dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (m, &v) in x.iter().enumerate() {
                let angle = 2.0 * PI * ((k * m) % n) as f64 / n as f64;
                re += v * angle.cos();
                im += v * angle.sin();
            }
            (re * scale, im * scale)
        })
        .collect()
}

// ------------------------------------------------------------------- cosine

pub fn brute_cosine(u: &[f64], v: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for i in 0..u.len() {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    dot / (nu.sqrt() * nv.sqrt())
}

/// Mean and population std of all unordered pair cosines, by enumeration.
pub fn brute_pair_stats(vectors: &[Vec<f64>]) -> Option<(f64, f64, usize)> {
    let mut all = Vec::new();
    for i in 0..vectors.len() {
        for j in 0..vectors.len() {
            if i < j {
                all.push(brute_cosine(&vectors[i], &vectors[j]));
            }
        }
    }
    if all.is_empty() {
        return None;
    }
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let var = all.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / all.len() as f64;
    Some((mean, var.sqrt(), all.len()))
}

// ---------------------------------------------------------- planted datasets

#[derive(Debug, Clone)]
pub struct PlantedRecord {
    pub id: String,
    pub length: usize,
    pub vector: Vec<f64>,
}

/// Records whose direction drifts toward a shared axis as length grows.
pub fn planted_embeddings(seed: u64, count: usize, dim: usize, max_len: usize) -> Vec<PlantedRecord> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let length = r.random_range(1..=max_len);
            let pull = length as f64 / max_len as f64;
            let vector = (0..dim)
                .map(|j| {
                    let noise: f64 = r.random_range(-1.0..1.0);
                    if j == 0 { 3.0 * pull + noise } else { noise }
                })
                .collect();
            PlantedRecord {
                id: format!("r{i:04}"),
                length,
                vector,
            }
        })
        .collect()
}

pub fn embeddings_jsonl(records: &[PlantedRecord]) -> String {
    records
        .iter()
        .map(|r| {
            let v: Vec<String> = r.vector.iter().map(|x| format!("{x:?}")).collect();
            format!("{{\"id\":\"{}\",\"length\":{},\"vector\":[{}]}}\n", r.id, r.length, v.join(","))
        })
        .collect()
}

/// A run with `queries` queries of `depth` documents each. Long documents are
/// planted near the bottom of each list, short ones near the top, and a few
/// relevant documents are left out of the run entirely.
#[derive(Debug, Clone)]
pub struct PlantedRun {
    /// (qid, docid, rank, score) in file order (shuffled within a query).
    pub lines: Vec<(String, String, usize, f64)>,
    pub qrels: Vec<(String, String, i32)>,
    pub lengths: BTreeMap<String, usize>,
}

pub fn planted_run(seed: u64, queries: usize, depth: usize) -> PlantedRun {
    let mut r = rng(seed);
    let mut lines = Vec::new();
    let mut qrels = Vec::new();
    let mut lengths = BTreeMap::new();
    for q in 0..queries {
        let qid = format!("q{q}");
        let mut block = Vec::new();
        for rank in 1..=depth {
            let doc = format!("d{q}_{rank}");
            let long = rank * 3 > depth * 2;
            let length = if long {
                500 + r.random_range(0..500)
            } else {
                10 + r.random_range(0..200)
            };
            lengths.insert(doc.clone(), length);
            block.push((qid.clone(), doc.clone(), rank, 100.0 - rank as f64 * 0.5));
            if r.random_range(0.0..1.0) < 0.15 {
                qrels.push((qid.clone(), doc, 1));
            } else if r.random_range(0.0..1.0) < 0.05 {
                qrels.push((qid.clone(), doc, 0));
            }
        }
        for k in 0..2 {
            let doc = format!("missing{q}_{k}");
            lengths.insert(doc.clone(), r.random_range(1..1000));
            qrels.push((qid.clone(), doc, 2));
        }
        // shuffle file order within the query
        for i in (1..block.len()).rev() {
            let j = r.random_range(0..=i);
            block.swap(i, j);
        }
        lines.extend(block);
    }
    PlantedRun { lines, qrels, lengths }
}

impl PlantedRun {
    pub fn run_text(&self) -> String {
        self.lines
            .iter()
            .map(|(q, d, rank, s)| format!("{q} Q0 {d} {rank} {s:?} planted\n"))
            .collect()
    }

    pub fn qrels_text(&self) -> String {
        self.qrels.iter().map(|(q, d, rel)| format!("{q} 0 {d} {rel}\n")).collect()
    }

    pub fn lengths_text(&self) -> String {
        self.lengths.iter().map(|(d, l)| format!("{d} {l}\n")).collect()
    }

    fn relevant(&self) -> Vec<(String, String)> {
        self.qrels
            .iter()
            .filter(|(_, _, rel)| *rel > 0)
            .map(|(q, d, _)| (q.clone(), d.clone()))
            .collect()
    }

    /// Shortest and longest `ceil(p * N)` relevant (qid, doc) pairs.
    pub fn cohorts(&self, p: f64) -> (Vec<QrelPair>, Vec<QrelPair>) {
        let mut rel = self.relevant();
        rel.sort_by(|a, b| {
            self.lengths[&a.1]
                .cmp(&self.lengths[&b.1])
                .then_with(|| a.1.cmp(&b.1))
                .then_with(|| a.0.cmp(&b.0))
        });
        let k = (p * rel.len() as f64).ceil() as usize;
        let long = rel[rel.len() - k..].to_vec();
        rel.truncate(k);
        (rel, long)
    }

    /// Rank of `doc` in `qid` and that query's list length, by linear scan.
    pub fn position(&self, qid: &str, doc: &str) -> Option<(usize, usize)> {
        let list: Vec<_> = self.lines.iter().filter(|l| l.0 == qid).collect();
        let last = list.iter().map(|l| l.2).max()?;
        list.iter().find(|l| l.1 == doc).map(|l| (l.2, last))
    }

    /// Recount: bin `b` holds ranks with `b/bins < rank/len <= (b+1)/bins`.
    pub fn recount(&self, cohort: &[(String, String)], bins: usize) -> (Vec<usize>, usize) {
        let mut counts = vec![0; bins];
        let mut unranked = 0;
        for (q, d) in cohort {
            match self.position(q, d) {
                None => unranked += 1,
                Some((rank, len)) => {
                    let b = (0..bins)
                        .find(|&b| b * len < rank * bins && rank * bins <= (b + 1) * len)
                        .expect("every normalised rank falls in some bin");
                    counts[b] += 1;
                }
            }
        }
        (counts, unranked)
    }

    pub fn mean_rank(&self, cohort: &[(String, String)]) -> Option<f64> {
        let ranks: Vec<usize> = cohort.iter().filter_map(|(q, d)| self.position(q, d)).map(|p| p.0).collect();
        (!ranks.is_empty()).then(|| ranks.iter().sum::<usize>() as f64 / ranks.len() as f64)
    }
}
