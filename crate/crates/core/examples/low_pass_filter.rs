//! Repeated multiplication by a softmax attention matrix drains the
//! high-frequency part of a signal.
//!
//! Prints the HC/DC ratio of `A^t z` for a 64-token Gaussian-logit attention
//! matrix, alongside the DFT route to the same split.

use length_collapse::attention::{sample_attention, AttentionConfig};
use length_collapse::rng;
use length_collapse::spectral::{dft, low_pass_iterate, random_probe};

fn main() {
    let a = sample_attention(&AttentionConfig::new(64, 32).with_seed(7)).unwrap();
    let z = random_probe(&mut rng::seeded(8), 64, 1.0);

    let spectrum = dft(&z);
    let hc_energy: f64 = spectrum.hc_coefficients().iter().map(|c| c.norm_sqr()).sum();
    println!(
        "probe: |DC| = {:.4}, |HC| = {:.4}",
        spectrum.dc_coefficient().norm(),
        hc_energy.sqrt()
    );

    let ratios = low_pass_iterate(a.as_matrix(), &z, 40).unwrap();
    println!("{:>4}  {:>12}", "t", "HC/DC");
    for t in [0, 1, 2, 4, 8, 16, 32, 40] {
        println!("{t:>4}  {:>12.4e}", ratios[t].value());
    }
}
