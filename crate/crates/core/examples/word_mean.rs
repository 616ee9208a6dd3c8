//! Averaged word embeddings concentrate around the vocabulary mean, so their
//! pairwise cosine rises with length even without attention.

use length_collapse::encoder::{init_encoder, mean_word_embedding_similarity, word_mean_table, EncoderConfig};

fn main() {
    let params = init_encoder(&EncoderConfig::default()).unwrap();
    let rows = mean_word_embedding_similarity(&params, &[1, 4, 16, 64, 256], 100, 0).unwrap();
    print!("{}", word_mean_table(&rows).to_csv_string());
}
