//! Checks the per-layer HC contraction `||HC[AXW]||_F <= sigma_a ||W||_2 ||HC[X]||_F`
//! on a handful of random inputs and prints both sides.

use length_collapse::attention::{sample_attention, sigma_a, theorem2_check, AttentionConfig};
use length_collapse::rng;
use length_collapse::spectral::FeatureMatrix;

fn main() {
    println!("{:>4} {:>8} {:>12} {:>12} {:>6}", "n", "sigma_a", "lhs", "rhs", "holds");
    for (i, n) in [4, 16, 64, 128].into_iter().enumerate() {
        let mut r = rng::seeded(100 + i as u64);
        let a = sample_attention(&AttentionConfig::new(n, 32).with_seed(i as u64)).unwrap();
        let x = FeatureMatrix::new(rng::gaussian_matrix(&mut r, n, 16, 1.0).add_scalar(0.5)).unwrap();
        let w = rng::gaussian_matrix(&mut r, 16, 16, 0.25);
        let report = theorem2_check(&x, &a, &w, 1e-9).unwrap();
        println!(
            "{n:>4} {:>8.4} {:>12.4e} {:>12.4e} {:>6}",
            sigma_a(&a),
            report.lhs,
            report.rhs,
            report.holds
        );
    }
}
