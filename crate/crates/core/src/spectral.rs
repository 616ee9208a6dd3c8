//! Fourier primitives on token signals.
//!
//! A feature matrix `X` (n tokens x d channels) is treated as `d` independent
//! length-`n` signals. Its DC component keeps only the zero-frequency Fourier
//! coefficient of each channel, which is the same as replacing every entry of a
//! column by the column mean: `DC[X] = (1/n) 1 1^T X`. The HC component is the
//! remainder `HC[X] = X - DC[X]`.
//!
//! The DFT here is the unitary transform with basis vectors
//! `f_k[m] = exp(+2 pi i k m / n) / sqrt(n)`, applied by direct summation.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("signal must have at least one entry")]
    EmptySignal,
    #[error("feature matrix must be at least 1x1, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("HC/DC ratio is undefined: both components are zero")]
    DegenerateRatio,
    #[error("probe signal has zero mean, so its DC component is identically zero")]
    ZeroMeanProbe,
    #[error("matrix is not row-stochastic: {0}")]
    NotRowStochastic(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// A real signal `z` of length `n >= 1` with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSignal {
    values: Vec<f64>,
}

impl RealSignal {
    pub fn new(values: Vec<f64>) -> Result<Self, SpectralError> {
        if values.is_empty() {
            return Err(SpectralError::EmptySignal);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SpectralError::NonFinite(i));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mean(&self) -> f64 {
        shifted_mean(self.values.iter().copied(), self.values.len())
    }

    pub fn hc_dc_ratio(&self) -> Result<HcDcRatio, SpectralError> {
        hc_dc_ratio(&FeatureMatrix::from(self))
    }
}

/// `n x d` matrix of token features with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(DMatrix<f64>);

impl FeatureMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self, SpectralError> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(SpectralError::EmptyMatrix {
                rows: data.nrows(),
                cols: data.ncols(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(SpectralError::NonFinite(i));
        }
        Ok(Self(data))
    }

    pub fn from_row_slice(rows: usize, cols: usize, values: &[f64]) -> Result<Self, SpectralError> {
        if values.len() != rows * cols {
            return Err(SpectralError::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, values))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn column(&self, j: usize) -> RealSignal {
        RealSignal {
            values: self.0.column(j).iter().copied().collect(),
        }
    }
}

impl From<&RealSignal> for FeatureMatrix {
    fn from(signal: &RealSignal) -> Self {
        FeatureMatrix(DMatrix::from_column_slice(signal.len(), 1, signal.values()))
    }
}

/// Mean computed relative to the first entry, so constant inputs give their
/// value back exactly and their HC part is exactly zero.
fn shifted_mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    let mut iter = values.peekable();
    let Some(&first) = iter.peek() else {
        return 0.0;
    };
    first + iter.map(|v| v - first).sum::<f64>() / n as f64
}

fn column_means(x: &DMatrix<f64>) -> Vec<f64> {
    x.column_iter()
        .map(|c| shifted_mean(c.iter().copied(), x.nrows()))
        .collect()
}

/// `(1/n) 1 1^T X` for a raw matrix.
pub(crate) fn dc_of(x: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(x);
    DMatrix::from_fn(x.nrows(), x.ncols(), |_, j| means[j])
}

/// `(I - (1/n) 1 1^T) X` for a raw matrix.
pub(crate) fn hc_of(x: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(x);
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - means[j])
}

pub fn dc_project(x: &FeatureMatrix) -> FeatureMatrix {
    FeatureMatrix(dc_of(&x.0))
}

pub fn hc_project(x: &FeatureMatrix) -> FeatureMatrix {
    FeatureMatrix(hc_of(&x.0))
}

/// DC/HC decomposition with Frobenius energies.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSplit {
    pub dc: FeatureMatrix,
    pub hc: FeatureMatrix,
    pub dc_norm: f64,
    pub hc_norm: f64,
}

impl SpectralSplit {
    pub fn of(x: &FeatureMatrix) -> Self {
        let dc = dc_project(x);
        let hc = FeatureMatrix(&x.0 - &dc.0);
        let dc_norm = dc.frobenius_norm();
        let hc_norm = hc.frobenius_norm();
        Self {
            dc,
            hc,
            dc_norm,
            hc_norm,
        }
    }

    pub fn ratio(&self) -> Result<HcDcRatio, SpectralError> {
        ratio_from_norms(self.hc_norm, self.dc_norm)
    }
}

/// `||HC[x]|| / ||DC[x]||`. Infinite when the signal has no DC energy at all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HcDcRatio {
    Finite(f64),
    Infinite,
}

impl HcDcRatio {
    pub fn value(self) -> f64 {
        match self {
            HcDcRatio::Finite(v) => v,
            HcDcRatio::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, HcDcRatio::Infinite)
    }
}

fn ratio_from_norms(hc: f64, dc: f64) -> Result<HcDcRatio, SpectralError> {
    match (hc == 0.0, dc == 0.0) {
        (true, true) => Err(SpectralError::DegenerateRatio),
        (false, true) => Ok(HcDcRatio::Infinite),
        _ => Ok(HcDcRatio::Finite(hc / dc)),
    }
}

/// HC/DC energy ratio. Signals use the 2-norm, matrices the Frobenius norm
/// (the two coincide for an `n x 1` matrix).
pub fn hc_dc_ratio(x: &FeatureMatrix) -> Result<HcDcRatio, SpectralError> {
    let split = SpectralSplit::of(x);
    split.ratio()
}

/// Unitary DFT spectrum of a real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    coefficients: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn dc_coefficient(&self) -> Complex64 {
        self.coefficients[0]
    }

    pub fn hc_coefficients(&self) -> &[Complex64] {
        &self.coefficients[1..]
    }

    /// Sum of squared magnitudes; equals `||z||^2` for a unitary transform.
    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn inverse(&self) -> Vec<Complex64> {
        transform(&self.coefficients, -1.0)
    }

    /// Real part of the inverse transform.
    pub fn to_real(&self) -> Vec<f64> {
        self.inverse().into_iter().map(|c| c.re).collect()
    }

    /// Keeps only the coefficients selected by `band`.
    pub fn masked(&self, band: Band) -> ComplexSpectrum {
        let coefficients = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(k, &c)| match (band, k) {
                (Band::Dc, 0) | (Band::Hc, 1..) => c,
                _ => Complex64::new(0.0, 0.0),
            })
            .collect();
        ComplexSpectrum { coefficients }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    Dc,
    Hc,
}

// sign = +1 forward, -1 inverse; both scaled by 1/sqrt(n).
fn transform(input: &[Complex64], sign: f64) -> Vec<Complex64> {
    let n = input.len();
    let roots: Vec<Complex64> = (0..n)
        .map(|m| Complex64::from_polar(1.0, sign * 2.0 * std::f64::consts::PI * m as f64 / n as f64))
        .collect();
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|k| {
            let acc: Complex64 = input
                .iter()
                .enumerate()
                .map(|(m, &z)| z * roots[(k * m) % n])
                .sum();
            acc * scale
        })
        .collect()
}

pub fn dft(signal: &RealSignal) -> ComplexSpectrum {
    let input: Vec<Complex64> = signal.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    ComplexSpectrum {
        coefficients: transform(&input, 1.0),
    }
}

/// Band projection computed channel-by-channel through the DFT: transform,
/// zero the other band, invert. Agrees with [`dc_project`] / [`hc_project`].
pub fn project_via_dft(x: &FeatureMatrix, band: Band) -> FeatureMatrix {
    let mut out = DMatrix::zeros(x.rows(), x.cols());
    for j in 0..x.cols() {
        let recon = dft(&x.column(j)).masked(band).to_real();
        out.column_mut(j).copy_from_slice(&recon);
    }
    FeatureMatrix(out)
}

/// Largest singular value estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralNorm {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const POWER_ITERATION_TOL: f64 = 1e-12;
pub const POWER_ITERATION_MAX: usize = 10_000;
const CONFIRM_MIN_ITERS: usize = 50;
const RESTART_SEED: u64 = 0x51_6E_A1_5E;

/// Largest singular value by power iteration on the smaller Gram matrix.
///
/// Starts from the normalised all-ones vector. Once the Rayleigh quotient
/// settles, the iterate is perturbed by a seeded unit Gaussian and iterated for
/// at least 50 more steps; a start orthogonal to the dominant singular vector
/// (which happens for `HC[A]` with row-stochastic `A`) is caught this way.
pub fn spectral_norm(m: &DMatrix<f64>) -> SpectralNorm {
    if m.is_empty() || m.iter().all(|&v| v == 0.0) {
        return SpectralNorm {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let gram = if m.nrows() >= m.ncols() {
        m.transpose() * m
    } else {
        m * m.transpose()
    };
    let k = gram.nrows();
    let start = vec![1.0 / (k as f64).sqrt(); k];
    let first = rayleigh_iterate(&gram, start, POWER_ITERATION_MAX, 0);

    let mut rng = rng::seeded(RESTART_SEED);
    let noise = unit(rng::gaussian_vector(&mut rng, k, 1.0));
    let restart: Vec<f64> = first.vector.iter().zip(&noise).map(|(a, b)| a + b).collect();
    let budget = POWER_ITERATION_MAX.saturating_sub(first.iterations).max(CONFIRM_MIN_ITERS);
    let second = rayleigh_iterate(&gram, unit(restart), budget, CONFIRM_MIN_ITERS);

    let lambda = first.lambda.max(second.lambda).max(0.0);
    SpectralNorm {
        value: lambda.sqrt(),
        iterations: first.iterations + second.iterations,
        converged: second.converged,
    }
}

struct Iterate {
    lambda: f64,
    vector: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn rayleigh_iterate(gram: &DMatrix<f64>, start: Vec<f64>, max_iters: usize, min_iters: usize) -> Iterate {
    let k = gram.nrows();
    let mut v = nalgebra::DVector::from_vec(start);
    let mut prev = f64::NAN;
    for it in 1..=max_iters {
        let w = gram * &v;
        let lambda = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            // v sits in the null space; the quotient is exactly zero.
            return Iterate {
                lambda: 0.0,
                vector: v.iter().copied().collect(),
                iterations: it,
                converged: true,
            };
        }
        v = w / norm;
        if it > min_iters && (lambda - prev).abs() <= POWER_ITERATION_TOL * lambda.abs() {
            return Iterate {
                lambda,
                vector: v.iter().copied().collect(),
                iterations: it,
                converged: true,
            };
        }
        prev = lambda;
    }
    debug_assert_eq!(v.len(), k);
    Iterate {
        lambda: prev,
        vector: v.iter().copied().collect(),
        iterations: max_iters,
        converged: false,
    }
}

/// Checks nonnegative entries and unit row sums within `tol`.
pub fn check_row_stochastic(a: &DMatrix<f64>, tol: f64) -> Result<(), SpectralError> {
    if a.nrows() != a.ncols() {
        return Err(SpectralError::NotRowStochastic(format!(
            "{}x{} is not square",
            a.nrows(),
            a.ncols()
        )));
    }
    for (i, row) in a.row_iter().enumerate() {
        if let Some(v) = row.iter().find(|v| !(**v >= 0.0)) {
            return Err(SpectralError::NotRowStochastic(format!("row {i} has entry {v}")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(SpectralError::NotRowStochastic(format!("row {i} sums to {sum}")));
        }
    }
    Ok(())
}

/// HC/DC ratio of `A^t z` for `t = 0..=t_max`.
pub fn low_pass_iterate(a: &DMatrix<f64>, z: &RealSignal, t_max: usize) -> Result<Vec<HcDcRatio>, SpectralError> {
    check_row_stochastic(a, 1e-10)?;
    if a.nrows() != z.len() {
        return Err(SpectralError::DimensionMismatch(format!(
            "{}x{} matrix applied to a length-{} signal",
            a.nrows(),
            a.ncols(),
            z.len()
        )));
    }
    let scale = z.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if z.mean().abs() <= f64::EPSILON * scale {
        return Err(SpectralError::ZeroMeanProbe);
    }
    let mut current = DMatrix::from_column_slice(z.len(), 1, z.values());
    let mut ratios = Vec::with_capacity(t_max + 1);
    for t in 0..=t_max {
        if t > 0 {
            current = a * current;
        }
        let hc = hc_of(&current).norm();
        let dc = dc_of(&current).norm();
        ratios.push(ratio_from_norms(hc, dc)?);
    }
    Ok(ratios)
}

/// Draws a random signal with nonzero mean: `offset + N(0, 1)` entries.
pub fn random_probe<R: Rng + ?Sized>(rng: &mut R, n: usize, offset: f64) -> RealSignal {
    let values = rng::gaussian_vector(rng, n, 1.0).into_iter().map(|v| v + offset).collect();
    RealSignal { values }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_row_slice(values.len(), 1, values).unwrap()
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert_eq!(RealSignal::new(vec![]), Err(SpectralError::EmptySignal));
        assert_eq!(RealSignal::new(vec![1.0, f64::NAN]), Err(SpectralError::NonFinite(1)));
        assert!(FeatureMatrix::new(DMatrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn dft_of_constant_is_pure_dc() {
        let c = 1.7;
        let spec = dft(&RealSignal::new(vec![c; 9]).unwrap());
        assert!((spec.dc_coefficient().re - c * 3.0).abs() < 1e-12);
        assert!(spec.dc_coefficient().im.abs() < 1e-12);
        assert!(spec.hc_coefficients().iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn dft_of_alternating_pair() {
        let spec = dft(&RealSignal::new(vec![1.0, -1.0]).unwrap());
        assert!(spec.dc_coefficient().norm() < 1e-15);
        assert_eq!(spec.hc_coefficients().len(), 1);
        assert!((spec.hc_coefficients()[0].norm() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn projections_of_ramp() {
        let x = col(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(dc_project(&x).as_matrix().as_slice(), &[2.5; 4]);
        assert_eq!(hc_project(&x).as_matrix().as_slice(), &[-1.5, -0.5, 0.5, 1.5]);
        let r = hc_dc_ratio(&x).unwrap().value();
        assert!((r - 5f64.sqrt() / 5.0).abs() < 1e-15);
    }

    #[test]
    fn constant_and_zero_mean_columns() {
        let c = col(&[0.1, 0.1, 0.1]);
        assert_eq!(dc_project(&c), c);
        assert!(hc_project(&c).as_matrix().iter().all(|&v| v == 0.0));
        assert_eq!(hc_dc_ratio(&c).unwrap(), HcDcRatio::Finite(0.0));

        let z = col(&[1.0, -1.0]);
        assert_eq!(dc_project(&z).as_matrix().as_slice(), &[0.0, 0.0]);
        assert_eq!(hc_dc_ratio(&z).unwrap(), HcDcRatio::Infinite);
        assert_eq!(hc_dc_ratio(&col(&[0.0, 0.0])), Err(SpectralError::DegenerateRatio));
    }

    #[test]
    fn single_token_signal_has_no_hc() {
        let x = col(&[3.0]);
        assert_eq!(hc_dc_ratio(&x).unwrap(), HcDcRatio::Finite(0.0));
        assert_eq!(hc_dc_ratio(&col(&[0.0])), Err(SpectralError::DegenerateRatio));
    }

    #[test]
    fn spectral_norm_trivial_cases() {
        let id = DMatrix::<f64>::identity(6, 6);
        let s = spectral_norm(&id);
        assert!((s.value - 1.0).abs() < 1e-12 && s.converged);
        assert_eq!(spectral_norm(&DMatrix::zeros(4, 3)).value, 0.0);
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, -3.0, 2.0]));
        assert!((spectral_norm(&diag).value - 3.0).abs() < 1e-10);
    }

    #[test]
    fn spectral_norm_escapes_orthogonal_start() {
        // The all-ones start lies exactly in the null space of the centering projector.
        let n = 5;
        let centering = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64);
        let s = spectral_norm(&centering);
        assert!((s.value - 1.0).abs() < 1e-10, "{s:?}");
    }

    #[test]
    fn low_pass_uniform_and_identity() {
        let n = 4;
        let z = RealSignal::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let uniform = DMatrix::from_element(n, n, 1.0 / n as f64);
        let traj = low_pass_iterate(&uniform, &z, 5).unwrap();
        assert!(traj[1..].iter().all(|r| r.value() == 0.0), "{traj:?}");

        let id = DMatrix::<f64>::identity(n, n);
        let traj = low_pass_iterate(&id, &z, 5).unwrap();
        assert!(traj.iter().all(|r| (r.value() - 5f64.sqrt() / 5.0).abs() < 1e-15));
    }

    #[test]
    fn low_pass_rejects_zero_mean_probe() {
        let z = RealSignal::new(vec![1.0, -1.0, 2.0, -2.0]).unwrap();
        let id = DMatrix::<f64>::identity(4, 4);
        assert_eq!(low_pass_iterate(&id, &z, 3), Err(SpectralError::ZeroMeanProbe));
    }

    #[test]
    fn low_pass_rejects_non_stochastic() {
        let z = RealSignal::new(vec![1.0, 2.0]).unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.5, 0.5]);
        assert!(matches!(low_pass_iterate(&m, &z, 1), Err(SpectralError::NotRowStochastic(_))));
    }
}
