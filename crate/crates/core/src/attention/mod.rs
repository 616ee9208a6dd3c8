//! Synthetic softmax attention and its filter rate.
//!
//! Queries and keys are Gaussian matrices, logits are `Q K^T / sqrt(d)`, and
//! the attention matrix is the row softmax of `logits / tau`. The filter rate
//! `sigma_a` is the largest singular value of `HC[A] = (I - 11^T/n) A`; one
//! attention step shrinks the HC energy of its input by at most
//! `sigma_a * ||W_V||_2`.

mod fenton;
mod sweep;

pub use fenton::{fenton_params, monte_carlo_log_sum, FentonParams, LogSumMoments};
pub use sweep::{sigma_a_sweep, sweep_table, SweepRow};

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::rng;
use crate::spectral::{self, FeatureMatrix, SpectralError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttentionError {
    #[error("invalid attention config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Generating parameters for a Gaussian-logit attention matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttentionConfig {
    pub n: usize,
    pub d: usize,
    pub sigma_q: f64,
    pub sigma_k: f64,
    pub tau: f64,
    pub seed: u64,
}

impl AttentionConfig {
    pub fn new(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            sigma_q: 1.0,
            sigma_k: 1.0,
            tau: 1.0,
            seed: 0,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_sigmas(mut self, sigma_q: f64, sigma_k: f64) -> Self {
        self.sigma_q = sigma_q;
        self.sigma_k = sigma_k;
        self
    }

    pub fn validate(&self) -> Result<(), AttentionError> {
        let bad = |msg: String| Err(AttentionError::InvalidConfig(msg));
        if self.n == 0 || self.d == 0 {
            return bad(format!("n and d must be positive (n={}, d={})", self.n, self.d));
        }
        if !(self.sigma_q > 0.0 && self.sigma_q.is_finite()) || !(self.sigma_k > 0.0 && self.sigma_k.is_finite()) {
            return bad(format!("sigma_q={} and sigma_k={} must be positive", self.sigma_q, self.sigma_k));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau={} must lie in (0, 1]", self.tau));
        }
        Ok(())
    }
}

/// A square row-stochastic matrix, optionally tagged with the config that
/// generated it. Hand-built fixtures (identity, uniform) carry no config.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    data: DMatrix<f64>,
    config: Option<AttentionConfig>,
}

pub const ROW_SUM_TOL: f64 = 1e-10;

impl AttentionMatrix {
    pub fn from_matrix(data: DMatrix<f64>) -> Result<Self, AttentionError> {
        spectral::check_row_stochastic(&data, ROW_SUM_TOL)?;
        Ok(Self { data, config: None })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            data: DMatrix::from_element(n, n, 1.0 / n as f64),
            config: None,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            data: DMatrix::identity(n, n),
            config: None,
        }
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn config(&self) -> Option<&AttentionConfig> {
        self.config.as_ref()
    }
}

/// Pre-temperature logits `Q K^T / sqrt(d)` for the config's seed.
pub fn sample_logits(config: &AttentionConfig) -> DMatrix<f64> {
    let mut rng = rng::seeded(config.seed);
    let q = rng::gaussian_matrix(&mut rng, config.n, config.d, config.sigma_q);
    let k = rng::gaussian_matrix(&mut rng, config.n, config.d, config.sigma_k);
    (q * k.transpose()) / (config.d as f64).sqrt()
}

/// Row softmax of `logits / tau`, with the row maximum subtracted after the
/// temperature division.
pub fn softmax_rows(logits: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let mut out = logits / tau;
    for mut row in out.row_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|v| *v = (*v - max).exp());
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

pub fn sample_attention(config: &AttentionConfig) -> Result<AttentionMatrix, AttentionError> {
    config.validate()?;
    let logits = sample_logits(config);
    Ok(AttentionMatrix {
        data: softmax_rows(&logits, config.tau),
        config: Some(*config),
    })
}

pub(crate) fn sigma_a_of(a: &DMatrix<f64>) -> f64 {
    spectral::spectral_norm(&spectral::hc_of(a)).value
}

/// Filter rate: largest singular value of `(I - 11^T/n) A`.
pub fn sigma_a(a: &AttentionMatrix) -> f64 {
    sigma_a_of(&a.data)
}

/// Outcome of checking `lhs <= rhs` up to a relative tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub slack: f64,
    pub tolerance: f64,
}

impl BoundReport {
    /// `holds` iff `lhs <= rhs + tolerance * scale`.
    fn new(lhs: f64, rhs: f64, tolerance: f64, scale: f64) -> Self {
        Self {
            lhs,
            rhs,
            holds: lhs <= rhs + tolerance * scale,
            slack: rhs - lhs,
            tolerance,
        }
    }
}

/// Filter-rate bound for one attention step:
/// `||HC[A X W_V]||_F <= sigma_a ||W_V||_2 ||HC[X]||_F`.
///
/// The tolerance is relative to `max(rhs, ||A X W_V||_F)`: rounding in the HC
/// projection scales with the full output, not only with its HC part.
pub fn theorem2_check(
    x: &FeatureMatrix,
    a: &AttentionMatrix,
    w_v: &DMatrix<f64>,
    tolerance: f64,
) -> Result<BoundReport, AttentionError> {
    if a.n() != x.rows() || x.cols() != w_v.nrows() {
        return Err(AttentionError::ShapeMismatch(format!(
            "A is {n}x{n}, X is {}x{}, W_V is {}x{}",
            x.rows(),
            x.cols(),
            w_v.nrows(),
            w_v.ncols(),
            n = a.n()
        )));
    }
    let out = a.as_matrix() * x.as_matrix() * w_v;
    let lhs = spectral::hc_of(&out).norm();
    let hc_x = spectral::hc_of(x.as_matrix()).norm();
    let rhs = sigma_a(a) * spectral::spectral_norm(w_v).value * hc_x;
    Ok(BoundReport::new(lhs, rhs, tolerance, rhs.max(out.norm())))
}

/// Both halves of the norm lemma:
/// `||AB||_F <= ||A||_2 ||B||_F` and `||AB||_F <= ||A||_F ||B||_2`.
pub fn norm_lemma_check(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    tolerance: f64,
) -> Result<[BoundReport; 2], AttentionError> {
    if a.ncols() != b.nrows() {
        return Err(AttentionError::ShapeMismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let ab = (a * b).norm();
    let left = spectral::spectral_norm(a).value * b.norm();
    let right = a.norm() * spectral::spectral_norm(b).value;
    Ok([
        BoundReport::new(ab, left, tolerance, left),
        BoundReport::new(ab, right, tolerance, right),
    ])
}

/// Upper bound on `sigma_a` as a function of length `n >= 1` and logit
/// standard deviation `sigma_s`:
/// `sqrt(n / (2 sqrt(1 + exp(-2 sigma_s^2)) (n-1)^(3/2) + 1))`.
pub fn theorem3_bound(n: usize, sigma_s: f64) -> f64 {
    let n = n as f64;
    let spread = (1.0 + (-2.0 * sigma_s * sigma_s).exp()).sqrt();
    (n / (2.0 * spread * (n - 1.0).powf(1.5) + 1.0)).sqrt()
}

/// Logit spread and the derived intrinsic temperature `tau_s = 1 / sigma_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreStats {
    pub sigma_s: f64,
    pub c_cross: f64,
    pub tau_s: f64,
}

impl ScoreStats {
    pub fn from_sigma(sigma_s: f64, sigma_q: f64, sigma_k: f64) -> Self {
        Self {
            sigma_s,
            c_cross: sigma_s * sigma_s - (sigma_q * sigma_k).powi(2),
            tau_s: 1.0 / sigma_s,
        }
    }
}

/// Pools the pre-temperature logits of `trials` independent draws and reports
/// their sample standard deviation. `c_cross` is whatever variance is left over
/// after `sigma_q^2 sigma_k^2`; it is zero in expectation for this generator.
pub fn estimate_score_stats(config: &AttentionConfig, trials: usize) -> Result<ScoreStats, AttentionError> {
    config.validate()?;
    if trials == 0 {
        return Err(AttentionError::InvalidConfig("trials must be at least 1".into()));
    }
    let mut stats = RunningStats::default();
    for t in 0..trials {
        let trial = config.with_seed(rng::derive_seed(config.seed, t as u64));
        sample_logits(&trial).iter().for_each(|&v| stats.push(v));
    }
    Ok(ScoreStats::from_sigma(stats.std(), config.sigma_q, config.sigma_k))
}

/// Welford accumulator with Chan's parallel merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total as f64;
        self.m2 += other.m2 + delta * delta * (self.count as f64 * other.count as f64) / total as f64;
        self.count = total;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (`n - 1` denominator); zero for fewer than two values.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }
}
