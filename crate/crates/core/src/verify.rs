//! Randomised verification suites for the filter-rate results.
//!
//! Each suite is a pure function of its parameters (seed included) and returns
//! a per-case table plus named pass/fail checks. Case `i` always draws from
//! `derive_seed(substream(seed, label), i)`, so suites are reproducible and
//! independent of thread count.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::attention::{
    fenton_params, monte_carlo_log_sum, norm_lemma_check, sample_attention, sigma_a_sweep, sweep_table,
    theorem2_check, AttentionConfig, AttentionError, SweepRow,
};
use crate::rng;
use crate::spectral::{low_pass_iterate, random_probe, FeatureMatrix, HcDcRatio, RealSignal, SpectralError};
use crate::table::Table;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            measured,
            tolerance,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub table: Table,
    pub checks: Vec<Check>,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Attention(#[from] AttentionError),
    #[error("invalid suite parameters: {0}")]
    InvalidParams(String),
}

fn case_seed(seed: u64, label: u64, case: usize) -> u64 {
    rng::derive_seed(rng::substream(seed, label), case as u64)
}

fn count_failures<T>(items: &[T], failed: impl Fn(&T) -> bool) -> usize {
    items.iter().filter(|x| failed(x)).count()
}

// ---------------------------------------------------------------- lemma 1

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma1Params {
    pub trials: usize,
    pub n: usize,
    pub d: usize,
    pub t_max: usize,
    pub threshold: f64,
    /// Mean offset added to `N(0,1)` probe entries.
    pub probe_offset: f64,
    /// Fixed probe used in every trial instead of a random one.
    pub probe: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for Lemma1Params {
    fn default() -> Self {
        Self {
            trials: 100,
            n: 64,
            d: 32,
            t_max: 100,
            threshold: 1e-6,
            probe_offset: 1.0,
            probe: None,
            seed: 0,
        }
    }
}

/// Attention matrix and probe for one Lemma 1 trial.
pub fn lemma1_case(params: &Lemma1Params, trial: usize) -> Result<(DMatrix<f64>, RealSignal), VerifyError> {
    let n = params.probe.as_ref().map_or(params.n, Vec::len);
    let config = AttentionConfig::new(n, params.d).with_seed(case_seed(params.seed, 1, trial));
    let a = sample_attention(&config)?.as_matrix().clone();
    let probe = match &params.probe {
        Some(values) => RealSignal::new(values.clone())?,
        None => random_probe(&mut rng::seeded(case_seed(params.seed, 2, trial)), n, params.probe_offset),
    };
    Ok((a, probe))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma1Trial {
    pub trial: usize,
    pub ratio_t1: f64,
    /// Largest ratio over `t = 2..=t_max`.
    pub max_after_t1: f64,
    pub ratio_final: f64,
}

pub fn lemma1_trials(params: &Lemma1Params) -> Result<Vec<Lemma1Trial>, VerifyError> {
    if params.trials == 0 || params.t_max < 2 {
        return Err(VerifyError::InvalidParams("lemma1 needs trials >= 1 and t_max >= 2".into()));
    }
    (0..params.trials)
        .into_par_iter()
        .map(|trial| {
            let (a, probe) = lemma1_case(params, trial)?;
            let ratios: Vec<f64> = low_pass_iterate(&a, &probe, params.t_max)?
                .into_iter()
                .map(HcDcRatio::value)
                .collect();
            Ok(Lemma1Trial {
                trial,
                ratio_t1: ratios[1],
                max_after_t1: ratios[2..].iter().copied().fold(f64::NEG_INFINITY, f64::max),
                ratio_final: ratios[params.t_max],
            })
        })
        .collect()
}

pub fn lemma1_suite(params: &Lemma1Params) -> Result<SuiteOutcome, VerifyError> {
    let trials = lemma1_trials(params)?;
    let mut table = Table::new(["trial", "ratio_t1", "max_ratio_after_t1", "ratio_final", "t_max"]);
    for t in &trials {
        table.push(vec![
            t.trial.into(),
            t.ratio_t1.into(),
            t.max_after_t1.into(),
            t.ratio_final.into(),
            params.t_max.into(),
        ]);
    }
    let not_decreasing = count_failures(&trials, |t| !(t.max_after_t1 < t.ratio_t1));
    let worst_final = trials.iter().map(|t| t.ratio_final).fold(0.0, f64::max);
    let checks = vec![
        Check::new(
            "lemma1.below_t1",
            not_decreasing == 0,
            not_decreasing as f64,
            0.0,
            format!("{not_decreasing} of {} trials have a ratio at t >= 2 not below the t = 1 ratio", trials.len()),
        ),
        Check::new(
            "lemma1.final_ratio",
            worst_final < params.threshold,
            worst_final,
            params.threshold,
            format!("largest HC/DC ratio at t = {}", params.t_max),
        ),
    ];
    Ok(SuiteOutcome { table, checks })
}

// ---------------------------------------------------------------- theorem 2

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem2Params {
    pub trials: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for Theorem2Params {
    fn default() -> Self {
        Self {
            trials: 1000,
            n_min: 4,
            n_max: 128,
            tolerance: 1e-9,
            seed: 0,
        }
    }
}

/// Random `(X, A, W_V)` for one trial: `n` uniform in `[n_min, n_max]`, feature
/// width and value width in `[4, 64]`, logit scales and temperature varied.
pub fn theorem2_case(
    params: &Theorem2Params,
    trial: usize,
) -> Result<(FeatureMatrix, crate::attention::AttentionMatrix, DMatrix<f64>), VerifyError> {
    let mut r = rng::seeded(case_seed(params.seed, 3, trial));
    let n = r.random_range(params.n_min..=params.n_max);
    let d = r.random_range(4..=64);
    let d_out = r.random_range(4..=64);
    let sigma_q = r.random_range(0.25..2.0);
    let sigma_k = r.random_range(0.25..2.0);
    let tau = r.random_range(0.2..=1.0);
    let offset = r.random_range(-2.0..2.0);
    let config = AttentionConfig::new(n, d)
        .with_sigmas(sigma_q, sigma_k)
        .with_tau(tau)
        .with_seed(r.random());
    let a = sample_attention(&config)?;
    let x = rng::gaussian_matrix(&mut r, n, d, 1.0).add_scalar(offset);
    let w = rng::gaussian_matrix(&mut r, d, d_out, 1.0 / (d as f64).sqrt());
    Ok((FeatureMatrix::new(x)?, a, w))
}

pub fn theorem2_suite(params: &Theorem2Params) -> Result<SuiteOutcome, VerifyError> {
    if params.trials == 0 || params.n_min < 2 || params.n_min > params.n_max {
        return Err(VerifyError::InvalidParams(format!(
            "theorem2 needs trials >= 1 and 2 <= n_min <= n_max, got {params:?}"
        )));
    }
    let reports = (0..params.trials)
        .into_par_iter()
        .map(|trial| {
            let (x, a, w) = theorem2_case(params, trial)?;
            Ok((x.rows(), theorem2_check(&x, &a, &w, params.tolerance)?))
        })
        .collect::<Result<Vec<_>, VerifyError>>()?;
    let mut table = Table::new(["trial", "n", "lhs", "rhs", "holds"]);
    for (trial, (n, r)) in reports.iter().enumerate() {
        table.push(vec![trial.into(), (*n).into(), r.lhs.into(), r.rhs.into(), r.holds.into()]);
    }
    let violations = count_failures(&reports, |(_, r)| !r.holds);
    let checks = vec![Check::new(
        "theorem2.holds",
        violations == 0,
        violations as f64,
        params.tolerance,
        format!("{} of {} trials hold", reports.len() - violations, reports.len()),
    )];
    Ok(SuiteOutcome { table, checks })
}

// ---------------------------------------------------------------- theorem 3

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem3Params {
    pub n_values: Vec<usize>,
    pub trials: usize,
    pub d: usize,
    pub tau: f64,
    pub bound_factor: f64,
    pub seed: u64,
}

impl Default for Theorem3Params {
    fn default() -> Self {
        Self {
            n_values: vec![8, 16, 32, 64, 128, 256],
            trials: 100,
            d: 32,
            tau: 1.0,
            bound_factor: 1.05,
            seed: 0,
        }
    }
}

pub fn theorem3_rows(params: &Theorem3Params) -> Result<Vec<SweepRow>, VerifyError> {
    let template = AttentionConfig::new(2, params.d).with_tau(params.tau).with_seed(params.seed);
    Ok(sigma_a_sweep(&params.n_values, &template, params.trials)?)
}

pub fn theorem3_suite(params: &Theorem3Params) -> Result<SuiteOutcome, VerifyError> {
    let rows = theorem3_rows(params)?;
    let rises = rows.windows(2).filter(|w| !(w[1].sigma_a_mean < w[0].sigma_a_mean)).count();
    let worst = rows
        .iter()
        .map(|r| r.sigma_a_mean / r.theorem3_bound)
        .fold(0.0, f64::max);
    let checks = vec![
        Check::new(
            "theorem3.decreasing",
            rises == 0,
            rises as f64,
            0.0,
            "adjacent lengths where mean sigma_a does not strictly decrease",
        ),
        Check::new(
            "theorem3.within_bound",
            worst <= params.bound_factor,
            worst,
            params.bound_factor,
            "largest ratio of mean sigma_a to the length bound",
        ),
    ];
    Ok(SuiteOutcome {
        table: sweep_table(&rows),
        checks,
    })
}

// ---------------------------------------------------------------- fenton

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FentonSuiteParams {
    pub n_values: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub samples: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for FentonSuiteParams {
    fn default() -> Self {
        Self {
            n_values: vec![10, 100],
            sigmas: vec![0.25, 0.5, 1.0],
            samples: 100_000,
            rel_tol: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FentonRow {
    pub n: usize,
    pub sigma: f64,
    pub mu_sum: f64,
    pub sigma_sum_sq: f64,
    pub mc_mean: f64,
    pub mc_variance: f64,
    pub mean_rel_err: f64,
    pub var_rel_err: f64,
    pub samples: u64,
}

pub fn fenton_rows(params: &FentonSuiteParams) -> Result<Vec<FentonRow>, VerifyError> {
    let cases: Vec<(usize, f64)> = params
        .n_values
        .iter()
        .flat_map(|&n| params.sigmas.iter().map(move |&s| (n, s)))
        .collect();
    cases
        .iter()
        .enumerate()
        .map(|(i, &(n, sigma))| {
            let p = fenton_params(n, sigma)?;
            let mc = monte_carlo_log_sum(n, sigma, params.samples, rng::substream(params.seed, i as u64))?;
            // mu_sum is 0 at n = 1, so the mean error is scaled by the larger of |mu| and sigma.
            let mean_scale = p.mu_sum.abs().max(p.sigma_sum_sq.sqrt());
            Ok(FentonRow {
                n,
                sigma,
                mu_sum: p.mu_sum,
                sigma_sum_sq: p.sigma_sum_sq,
                mc_mean: mc.mean,
                mc_variance: mc.variance,
                mean_rel_err: (mc.mean - p.mu_sum).abs() / mean_scale,
                var_rel_err: (mc.variance - p.sigma_sum_sq).abs() / p.sigma_sum_sq,
                samples: mc.samples,
            })
        })
        .collect()
}

pub fn fenton_suite(params: &FentonSuiteParams) -> Result<SuiteOutcome, VerifyError> {
    let rows = fenton_rows(params)?;
    let mut table = Table::new([
        "n",
        "sigma",
        "mu_sum",
        "sigma_sum_sq",
        "mc_mean",
        "mc_variance",
        "mean_rel_err",
        "var_rel_err",
        "samples",
    ]);
    for r in &rows {
        table.push(vec![
            r.n.into(),
            r.sigma.into(),
            r.mu_sum.into(),
            r.sigma_sum_sq.into(),
            r.mc_mean.into(),
            r.mc_variance.into(),
            r.mean_rel_err.into(),
            r.var_rel_err.into(),
            (r.samples as usize).into(),
        ]);
    }
    let worst_mean = rows.iter().map(|r| r.mean_rel_err).fold(0.0, f64::max);
    let worst_var = rows.iter().map(|r| r.var_rel_err).fold(0.0, f64::max);
    let checks = vec![
        Check::new(
            "fenton.mean",
            worst_mean <= params.rel_tol,
            worst_mean,
            params.rel_tol,
            "largest relative error of the Monte Carlo mean",
        ),
        Check::new(
            "fenton.variance",
            worst_var <= params.rel_tol,
            worst_var,
            params.rel_tol,
            "largest relative error of the Monte Carlo variance",
        ),
    ];
    Ok(SuiteOutcome { table, checks })
}

// ---------------------------------------------------------------- norm lemma

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormLemmaParams {
    pub trials: usize,
    pub max_dim: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for NormLemmaParams {
    fn default() -> Self {
        Self {
            trials: 500,
            max_dim: 40,
            tolerance: 1e-9,
            seed: 0,
        }
    }
}

pub fn norm_lemma_case(params: &NormLemmaParams, trial: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut r = rng::seeded(case_seed(params.seed, 4, trial));
    let (m, k, p) = (
        r.random_range(1..=params.max_dim),
        r.random_range(1..=params.max_dim),
        r.random_range(1..=params.max_dim),
    );
    let scale = r.random_range(0.1..10.0);
    let a = rng::gaussian_matrix(&mut r, m, k, scale);
    let b = rng::gaussian_matrix(&mut r, k, p, 1.0);
    (a, b)
}

pub fn norm_lemma_suite(params: &NormLemmaParams) -> Result<SuiteOutcome, VerifyError> {
    if params.trials == 0 || params.max_dim == 0 {
        return Err(VerifyError::InvalidParams("norm-lemma needs trials >= 1 and max_dim >= 1".into()));
    }
    let reports = (0..params.trials)
        .into_par_iter()
        .map(|trial| {
            let (a, b) = norm_lemma_case(params, trial);
            norm_lemma_check(&a, &b, params.tolerance)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = Table::new(["trial", "ab_fro", "spectral_rhs", "frobenius_rhs", "spectral_holds", "frobenius_holds"]);
    for (trial, [s, f]) in reports.iter().enumerate() {
        table.push(vec![
            trial.into(),
            s.lhs.into(),
            s.rhs.into(),
            f.rhs.into(),
            s.holds.into(),
            f.holds.into(),
        ]);
    }
    let spectral_fail = count_failures(&reports, |[s, _]| !s.holds);
    let frobenius_fail = count_failures(&reports, |[_, f]| !f.holds);
    let checks = vec![
        Check::new(
            "norm_lemma.spectral_left",
            spectral_fail == 0,
            spectral_fail as f64,
            params.tolerance,
            "violations of ||AB||_F <= ||A||_2 ||B||_F",
        ),
        Check::new(
            "norm_lemma.spectral_right",
            frobenius_fail == 0,
            frobenius_fail as f64,
            params.tolerance,
            "violations of ||AB||_F <= ||A||_F ||B||_2",
        ),
    ];
    Ok(SuiteOutcome { table, checks })
}
