//! Log-normal sum approximation against Monte Carlo.
//!
//! For `X_i ~ N(0, sigma^2)`, `log sum_i exp(X_i)` is approximately normal with
//! the parameters from `fenton_params`.

use length_collapse::attention::{fenton_params, monte_carlo_log_sum};

fn main() {
    println!(
        "{:>4} {:>6} {:>10} {:>10} {:>10} {:>10}",
        "n", "sigma", "mu", "mc_mean", "var", "mc_var"
    );
    for n in [10, 100] {
        for sigma in [0.25, 0.5, 1.0] {
            let p = fenton_params(n, sigma).unwrap();
            let mc = monte_carlo_log_sum(n, sigma, 100_000, 1).unwrap();
            println!(
                "{n:>4} {sigma:>6} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
                p.mu_sum, mc.mean, p.sigma_sum_sq, mc.variance
            );
        }
    }
}
