//! Mean filter rate `sigma_a` against sequence length, next to the length
//! bound, at two temperatures.

use length_collapse::attention::{sigma_a_sweep, sweep_table, AttentionConfig};

fn main() {
    let lengths = [8, 16, 32, 64, 128, 256];
    for tau in [1.0, 0.5] {
        let template = AttentionConfig::new(2, 32).with_tau(tau).with_seed(0);
        let rows = sigma_a_sweep(&lengths, &template, 50).unwrap();
        println!("tau = {tau:.1}");
        print!("{}", sweep_table(&rows).to_csv_string());
        println!();
    }
}
