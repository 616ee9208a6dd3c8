//! Embeddings of longer random sequences are more alike.
//!
//! Mean pairwise cosine of pooled toy-encoder embeddings for 60 random
//! sequences per length.

use length_collapse::encoder::{collapse_sweep, collapse_table, init_encoder, EncoderConfig};

fn main() {
    let params = init_encoder(&EncoderConfig::default()).unwrap();
    let rows = collapse_sweep(&params, &[16, 32, 64, 128, 256], 60, 1.0, 0).unwrap();
    print!("{}", collapse_table(&rows).to_csv_string());
}
