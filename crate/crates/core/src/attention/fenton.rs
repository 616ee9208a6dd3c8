//! Fenton-Wilkinson moment matching for sums of i.i.d. log-normal variables.
//!
//! For `X_i ~ N(0, sigma^2)`, the sum `S = sum_i exp(X_i)` is approximated by a
//! single log-normal `exp(N(mu_sum, sigma_sum_sq))` with the same mean and
//! variance as `S`.

use rayon::prelude::*;
use serde::Serialize;

use super::{AttentionError, RunningStats};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FentonParams {
    pub mu_sum: f64,
    pub sigma_sum_sq: f64,
}

/// `sigma_sum_sq = ln((e^{sigma^2} - 1)/n + 1)`, `mu_sum = ln n + (sigma^2 - sigma_sum_sq)/2`.
pub fn fenton_params(n: usize, sigma: f64) -> Result<FentonParams, AttentionError> {
    if n == 0 || !(sigma > 0.0 && sigma.is_finite()) {
        return Err(AttentionError::InvalidConfig(format!(
            "fenton parameters need n >= 1 and sigma > 0 (n={n}, sigma={sigma})"
        )));
    }
    let var = sigma * sigma;
    let nf = n as f64;
    let sigma_sum_sq = (var.exp_m1() / nf).ln_1p();
    Ok(FentonParams {
        mu_sum: nf.ln() + (var - sigma_sum_sq) / 2.0,
        sigma_sum_sq,
    })
}

/// Sample moments of `ln sum_i exp(X_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogSumMoments {
    pub mean: f64,
    pub variance: f64,
    pub samples: u64,
}

const CHUNK: usize = 1000;

/// Monte Carlo estimate of the mean and variance of `ln sum_{i<n} exp(X_i)`.
///
/// Samples are drawn in chunks of 1000, each chunk from its own derived seed,
/// and merged in chunk order, so the result does not depend on thread count.
pub fn monte_carlo_log_sum(n: usize, sigma: f64, samples: usize, seed: u64) -> Result<LogSumMoments, AttentionError> {
    if n == 0 || samples < 2 || !(sigma > 0.0) {
        return Err(AttentionError::InvalidConfig(format!(
            "monte carlo log-sum needs n >= 1, samples >= 2, sigma > 0 (n={n}, samples={samples}, sigma={sigma})"
        )));
    }
    let chunks = samples.div_ceil(CHUNK);
    let partials: Vec<RunningStats> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::seeded(rng::derive_seed(seed, c as u64));
            let take = CHUNK.min(samples - c * CHUNK);
            let mut stats = RunningStats::default();
            let mut xs = vec![0.0; n];
            for _ in 0..take {
                xs.iter_mut().for_each(|x| *x = sigma * rng::standard_normal(&mut rng));
                stats.push(log_sum_exp(&xs));
            }
            stats
        })
        .collect();
    let mut total = RunningStats::default();
    partials.iter().for_each(|p| total.merge(p));
    Ok(LogSumMoments {
        mean: total.mean(),
        variance: total.variance(),
        samples: total.count(),
    })
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
