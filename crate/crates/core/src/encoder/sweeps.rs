//! Length sweeps over the toy encoder.
//!
//! Token sequences for length `L` are drawn from `substream(seed, L)`, sample
//! `i` from `derive_seed(that, i)`. Sweeps at different temperatures with the
//! same seed therefore embed exactly the same sequences.

use rayon::prelude::*;
use serde::Serialize;

use super::{check_tau, embed, EncoderError, EncoderParams, TokenSequence};
use crate::metrics::{cosine, pairwise_cosine_stats};
use crate::rng;
use crate::table::Table;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollapseRow {
    pub length: usize,
    pub tau: f64,
    pub mean_cos: f64,
    pub std_cos: f64,
    pub pairs: usize,
    pub seed: u64,
}

fn sample_sequences(
    params: &EncoderParams,
    length: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<TokenSequence>, EncoderError> {
    if length == 0 {
        return Err(EncoderError::InvalidTokens("sequence length must be >= 1".into()));
    }
    let bucket = rng::substream(seed, length as u64);
    (0..count)
        .map(|i| {
            let mut r = rng::seeded(rng::derive_seed(bucket, i as u64));
            TokenSequence::random(&mut r, length, params.config.vocab_size)
        })
        .collect()
}

/// Mean and (population) standard deviation of pairwise cosine similarity
/// between the embeddings of `sequences_per_length` random sequences, per length.
pub fn collapse_sweep(
    params: &EncoderParams,
    lengths: &[usize],
    sequences_per_length: usize,
    tau: f64,
    seed: u64,
) -> Result<Vec<CollapseRow>, EncoderError> {
    check_tau(tau)?;
    if sequences_per_length < 2 {
        return Err(EncoderError::InvalidConfig("need at least 2 sequences per length".into()));
    }
    lengths
        .iter()
        .map(|&length| {
            let seqs = sample_sequences(params, length, sequences_per_length, seed)?;
            let embeddings = seqs
                .par_iter()
                .map(|s| embed(params, s, tau).map(|e| e.values))
                .collect::<Result<Vec<_>, _>>()?;
            let stats = pairwise_cosine_stats(&embeddings);
            Ok(CollapseRow {
                length,
                tau,
                mean_cos: stats.mean,
                std_cos: stats.std,
                pairs: stats.pairs,
                seed,
            })
        })
        .collect()
}

pub fn collapse_table(rows: &[CollapseRow]) -> Table {
    let mut t = Table::new(["length", "tau", "mean_cos", "std_cos", "pairs", "seed"]);
    for r in rows {
        t.push(vec![
            r.length.into(),
            r.tau.into(),
            r.mean_cos.into(),
            r.std_cos.into(),
            r.pairs.into(),
            r.seed.into(),
        ]);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepeatedRow {
    pub length: usize,
    pub cosine: f64,
}

/// Cosine between the embeddings of `[a; L]` and `[b; L]` for each length.
pub fn repeated_token_experiment(
    params: &EncoderParams,
    token_a: usize,
    token_b: usize,
    lengths: &[usize],
    tau: f64,
) -> Result<Vec<RepeatedRow>, EncoderError> {
    if token_a == token_b {
        return Err(EncoderError::InvalidTokens(format!(
            "repeated-token experiment needs two distinct tokens, got {token_a} twice"
        )));
    }
    repeated_cosines(params, token_a, token_b, lengths, tau)
}

pub(crate) fn repeated_cosines(
    params: &EncoderParams,
    token_a: usize,
    token_b: usize,
    lengths: &[usize],
    tau: f64,
) -> Result<Vec<RepeatedRow>, EncoderError> {
    let vocab = params.config.vocab_size;
    lengths
        .iter()
        .map(|&length| {
            let a = embed(params, &TokenSequence::repeated(token_a, length, vocab)?, tau)?;
            let b = embed(params, &TokenSequence::repeated(token_b, length, vocab)?, tau)?;
            Ok(RepeatedRow {
                length,
                cosine: a.cosine(&b),
            })
        })
        .collect()
}

pub fn repeated_table(rows: &[RepeatedRow]) -> Table {
    let mut t = Table::new(["length", "cosine"]);
    for r in rows {
        t.push(vec![r.length.into(), r.cosine.into()]);
    }
    t
}

/// Average of the raw embedding-table rows of `tokens`; no encoder layers.
pub fn mean_embedding(params: &EncoderParams, tokens: &TokenSequence) -> Vec<f64> {
    let d = params.config.model_dim;
    let mut acc = vec![0.0; d];
    for &t in tokens.ids() {
        for (a, v) in acc.iter_mut().zip(params.embedding.row(t).iter()) {
            *a += v;
        }
    }
    acc.iter().map(|v| v / tokens.len() as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WordMeanRow {
    pub length: usize,
    pub mean_cos: f64,
    pub std_cos: f64,
    pub samples: usize,
    pub pairs: usize,
    pub seed: u64,
}

/// Bucketed pairwise cosine of averaged word embeddings.
pub fn mean_word_embedding_similarity(
    params: &EncoderParams,
    lengths: &[usize],
    samples_per_length: usize,
    seed: u64,
) -> Result<Vec<WordMeanRow>, EncoderError> {
    if samples_per_length < 2 {
        return Err(EncoderError::InvalidConfig("need at least 2 samples per length".into()));
    }
    lengths
        .iter()
        .map(|&length| {
            let vectors: Vec<Vec<f64>> = sample_sequences(params, length, samples_per_length, seed)?
                .iter()
                .map(|s| mean_embedding(params, s))
                .collect();
            let stats = pairwise_cosine_stats(&vectors);
            Ok(WordMeanRow {
                length,
                mean_cos: stats.mean,
                std_cos: stats.std,
                samples: samples_per_length,
                pairs: stats.pairs,
                seed,
            })
        })
        .collect()
}

pub fn word_mean_table(rows: &[WordMeanRow]) -> Table {
    let mut t = Table::new(["length", "mean_cos", "std_cos", "samples", "seed"]);
    for r in rows {
        t.push(vec![
            r.length.into(),
            r.mean_cos.into(),
            r.std_cos.into(),
            r.samples.into(),
            r.seed.into(),
        ]);
    }
    t
}

/// Cosine of two explicit token sequences' mean word embeddings.
pub fn mean_embedding_cosine(params: &EncoderParams, a: &TokenSequence, b: &TokenSequence) -> f64 {
    cosine(&mean_embedding(params, a), &mean_embedding(params, b))
}
