use rayon::prelude::*;
use serde::Serialize;

use super::{sample_logits, sigma_a_of, softmax_rows, theorem3_bound, AttentionConfig, AttentionError, RunningStats};
use crate::rng;
use crate::table::Table;

/// One row of a filter-rate sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub tau: f64,
    /// Standard deviation of the temperature-scaled logits `p / tau`, pooled over trials.
    pub sigma_s_hat: f64,
    pub sigma_a_mean: f64,
    pub sigma_a_std: f64,
    pub theorem3_bound: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Mean `sigma_a` over `trials` sampled matrices for each length.
///
/// Trial seeds depend on the master seed and `n` only, so sweeps at different
/// temperatures see the same queries and keys.
pub fn sigma_a_sweep(
    n_values: &[usize],
    template: &AttentionConfig,
    trials: usize,
) -> Result<Vec<SweepRow>, AttentionError> {
    template.validate()?;
    if trials == 0 {
        return Err(AttentionError::InvalidConfig("trials must be at least 1".into()));
    }
    if let Some(n) = n_values.iter().find(|&&n| n < 2) {
        return Err(AttentionError::InvalidConfig(format!("sweep lengths must be >= 2, got {n}")));
    }
    let mut rows = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let bucket = rng::substream(template.seed, n as u64);
        let per_trial: Vec<(RunningStats, f64)> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let config = AttentionConfig {
                    n,
                    seed: rng::derive_seed(bucket, t as u64),
                    ..*template
                };
                let logits = sample_logits(&config);
                let mut stats = RunningStats::default();
                logits.iter().for_each(|&v| stats.push(v / config.tau));
                let a = softmax_rows(&logits, config.tau);
                (stats, sigma_a_of(&a))
            })
            .collect();
        let mut logit_stats = RunningStats::default();
        let mut sigma = RunningStats::default();
        for (s, value) in &per_trial {
            logit_stats.merge(s);
            sigma.push(*value);
        }
        let sigma_s_hat = logit_stats.std();
        rows.push(SweepRow {
            n,
            tau: template.tau,
            sigma_s_hat,
            sigma_a_mean: sigma.mean(),
            sigma_a_std: sigma.std(),
            theorem3_bound: theorem3_bound(n, sigma_s_hat),
            trials,
            seed: template.seed,
        });
    }
    Ok(rows)
}

pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut table = Table::new([
        "n",
        "tau",
        "sigma_s_hat",
        "sigma_a_mean",
        "sigma_a_std",
        "theorem3_bound",
        "trials",
        "seed",
    ]);
    for r in rows {
        table.push(vec![
            r.n.into(),
            r.tau.into(),
            r.sigma_s_hat.into(),
            r.sigma_a_mean.into(),
            r.sigma_a_std.into(),
            r.theorem3_bound.into(),
            r.trials.into(),
            r.seed.into(),
        ]);
    }
    table
}
