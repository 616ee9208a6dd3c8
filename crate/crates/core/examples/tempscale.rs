//! Lowering the attention temperature slows length collapse.
//!
//! Same encoder and sequences at three temperatures. Each column holds the
//! mean pairwise cosine at one temperature.

use length_collapse::encoder::{collapse_sweep, init_encoder, EncoderConfig};

fn main() {
    let lengths = [16, 64, 256];
    let params = init_encoder(&EncoderConfig::default()).unwrap();
    print!("{:>6}", "length");
    let taus = [1.0, 0.8, 0.5];
    for tau in taus {
        print!(" {:>10}", format!("tau={tau}"));
    }
    println!();
    let sweeps: Vec<_> = taus
        .iter()
        .map(|&tau| collapse_sweep(&params, &lengths, 40, tau, 3).unwrap())
        .collect();
    for (i, len) in lengths.iter().enumerate() {
        print!("{len:>6}");
        for s in &sweeps {
            print!(" {:>10.4}", s[i].mean_cos);
        }
        println!();
    }
}
