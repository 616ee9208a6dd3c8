//! Seeded random streams.
//!
//! Every experiment draws from ChaCha8 streams seeded with 64-bit integers.
//! Trial `i` of a run with master seed `s` uses the stream seed
//! `s ^ (i * GOLDEN_GAMMA)` (wrapping), so trials can be evaluated in any order
//! or in parallel and still reproduce bit-for-bit.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// 2^64 / phi, the usual Weyl-sequence increment.
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub type LabRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> LabRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream seed for trial `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    master ^ index.wrapping_mul(GOLDEN_GAMMA)
}

/// A decorrelated child seed for a labelled sub-experiment (e.g. one sweep
/// bucket). Nested `derive_seed` calls alone would collide on swapped indices,
/// so the child is passed through the splitmix64 finalizer first.
pub fn substream(master: u64, label: u64) -> u64 {
    splitmix64(derive_seed(master, label.wrapping_add(1)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `rows x cols` matrix with i.i.d. `N(0, std^2)` entries, drawn in row-major order.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, std: f64) -> DMatrix<f64> {
    let values: Vec<f64> = (0..rows * cols).map(|_| std * standard_normal(rng)).collect();
    DMatrix::from_row_slice(rows, cols, &values)
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, std: f64) -> Vec<f64> {
    (0..len).map(|_| std * standard_normal(rng)).collect()
}
