//! Cosine between the embeddings of `[a; L]` and `[b; L]` as `L` grows.
//!
//! Without positional encoding every row of a repeated-token sequence is the
//! same, so the embedding cannot depend on `L`; both settings are shown.

use length_collapse::encoder::{init_encoder, repeated_token_experiment, EncoderConfig, PositionalEncoding};

fn main() {
    let lengths = [1, 4, 16, 64, 256];
    for positional in [PositionalEncoding::None, PositionalEncoding::Sinusoidal] {
        let params = init_encoder(&EncoderConfig {
            positional,
            ..EncoderConfig::default()
        })
        .unwrap();
        let rows = repeated_token_experiment(&params, 11, 402, &lengths, 1.0).unwrap();
        println!("{positional:?}");
        for r in rows {
            println!("  L = {:>3}  cos = {:.6}", r.length, r.cosine);
        }
    }
}
