//! A toy transformer encoder.
//!
//! Embedding lookup, `layers` blocks of multi-head self-attention with an
//! optional residual connection, optional ReLU feed-forward network and
//! optional parameter-free layer normalisation, then pooling. All attention
//! heads divide their logits by a shared temperature `tau`.
//!
//! Weights are random and never trained; the encoder exists to measure how the
//! high-frequency energy of token features evolves through the stack.

mod sweeps;

pub use sweeps::{
    collapse_sweep, collapse_table, mean_embedding, mean_embedding_cosine, mean_word_embedding_similarity, repeated_table,
    repeated_token_experiment, word_mean_table, CollapseRow, RepeatedRow, WordMeanRow,
};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::{sigma_a_of, softmax_rows};
use crate::rng;
use crate::spectral::{hc_of, spectral_norm};
use crate::table::Table;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncoderError {
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("invalid token sequence: {0}")]
    InvalidTokens(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    Mean,
    FirstToken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PositionalEncoding {
    None,
    Sinusoidal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub ff_dim: usize,
    pub tau: f64,
    pub use_residual: bool,
    pub use_ffn: bool,
    pub use_layernorm: bool,
    pub positional: PositionalEncoding,
    pub pooling: Pooling,
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            heads: 4,
            model_dim: 64,
            ff_dim: 128,
            tau: 1.0,
            use_residual: true,
            use_ffn: true,
            use_layernorm: false,
            positional: PositionalEncoding::None,
            pooling: Pooling::Mean,
            vocab_size: 512,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    /// Attention-only stack: no residual, no FFN, no layer norm.
    pub fn msa_only(mut self) -> Self {
        self.use_residual = false;
        self.use_ffn = false;
        self.use_layernorm = false;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: String| Err(EncoderError::InvalidConfig(m));
        if self.layers == 0 {
            return bad("layers must be >= 1".into());
        }
        if self.heads == 0 || self.model_dim == 0 || !self.model_dim.is_multiple_of(self.heads) {
            return bad(format!(
                "model_dim {} must be a positive multiple of heads {}",
                self.model_dim, self.heads
            ));
        }
        if self.use_ffn && self.ff_dim == 0 {
            return bad("ff_dim must be >= 1 when the FFN is enabled".into());
        }
        if self.vocab_size == 0 {
            return bad("vocab_size must be >= 1".into());
        }
        check_tau(self.tau)
    }
}

fn check_tau(tau: f64) -> Result<(), EncoderError> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(EncoderError::InvalidConfig(format!("tau={tau} must lie in (0, 1]")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w_q: DMatrix<f64>,
    pub w_k: DMatrix<f64>,
    pub w_v: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub heads: Vec<HeadParams>,
    pub w_o: DMatrix<f64>,
    pub w1: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DMatrix<f64>,
}

/// Frozen encoder weights. Fields are public so experiments can edit a copy
/// (e.g. swap in a hand-built embedding table).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub embedding: DMatrix<f64>,
    pub layers: Vec<LayerParams>,
}

/// Samples all weights from the config seed.
///
/// Projection matrices are `N(0, 1/fan_in)` (standard deviation
/// `1/sqrt(fan_in)`); embedding rows are `N(0, I)`, the fan-in of a one-hot
/// lookup being 1. Biases start at zero. Draw order is fixed: embedding table,
/// then per layer each head's `W_Q, W_K, W_V`, then `W_O, W_1, W_2`.
pub fn init_encoder(config: &EncoderConfig) -> Result<EncoderParams, EncoderError> {
    config.validate()?;
    let mut rng = rng::seeded(config.seed);
    let d = config.model_dim;
    let hd = config.head_dim();
    let proj = 1.0 / (d as f64).sqrt();
    let embedding = rng::gaussian_matrix(&mut rng, config.vocab_size, d, 1.0);
    let layers = (0..config.layers)
        .map(|_| {
            let heads = (0..config.heads)
                .map(|_| HeadParams {
                    w_q: rng::gaussian_matrix(&mut rng, d, hd, proj),
                    w_k: rng::gaussian_matrix(&mut rng, d, hd, proj),
                    w_v: rng::gaussian_matrix(&mut rng, d, hd, proj),
                })
                .collect();
            let w_o = rng::gaussian_matrix(&mut rng, d, d, proj);
            let w1 = rng::gaussian_matrix(&mut rng, d, config.ff_dim, proj);
            let w2 = rng::gaussian_matrix(&mut rng, config.ff_dim, d, 1.0 / (config.ff_dim.max(1) as f64).sqrt());
            LayerParams {
                heads,
                w_o,
                w1,
                b1: DMatrix::zeros(1, config.ff_dim),
                w2,
                b2: DMatrix::zeros(1, d),
            }
        })
        .collect();
    Ok(EncoderParams {
        config: config.clone(),
        embedding,
        layers,
    })
}

/// Token ids, validated against a vocabulary size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence(Vec<usize>);

impl TokenSequence {
    pub fn new(ids: Vec<usize>, vocab_size: usize) -> Result<Self, EncoderError> {
        if ids.is_empty() {
            return Err(EncoderError::InvalidTokens("sequence is empty".into()));
        }
        if let Some(bad) = ids.iter().find(|&&t| t >= vocab_size) {
            return Err(EncoderError::InvalidTokens(format!(
                "token {bad} outside vocabulary of size {vocab_size}"
            )));
        }
        Ok(Self(ids))
    }

    pub fn repeated(token: usize, len: usize, vocab_size: usize) -> Result<Self, EncoderError> {
        Self::new(vec![token; len], vocab_size)
    }

    /// Uniform draw with replacement.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, len: usize, vocab_size: usize) -> Result<Self, EncoderError> {
        let ids = (0..len).map(|_| rng.random_range(0..vocab_size.max(1))).collect();
        Self::new(ids, vocab_size)
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub source_length: usize,
}

impl EmbeddingVector {
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        crate::metrics::cosine(&self.values, &other.values)
    }
}

/// HC energy through one encoder block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerStep {
    pub layer: usize,
    pub hc_in: f64,
    pub hc_out: f64,
    /// `ln(hc_out / hc_in)`; `None` flags a zero HC norm on either side.
    pub log_hc_ratio: Option<f64>,
    /// Largest filter rate over the block's heads.
    pub sigma_a: f64,
    /// Largest `||W_V^h W_O^h||_2` over heads, `W_O^h` being the head's rows of `W_O`.
    pub sigma_1: f64,
    /// `ln(sigma_a * sigma_1 * heads)`.
    pub log_bound: f64,
}

impl LayerStep {
    /// Whether `hc_out <= exp(log_bound) * hc_in` up to relative `tol`.
    /// `None` for degenerate steps.
    pub fn within_bound(&self, tol: f64) -> Option<bool> {
        self.log_hc_ratio?;
        Some(self.hc_out <= self.log_bound.exp() * self.hc_in * (1.0 + tol))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct LayerTrace {
    pub steps: Vec<LayerStep>,
}

impl LayerTrace {
    /// Columns: layer, log_hc_ratio, log_bound. Degenerate ratios print as `degenerate`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["layer", "log_hc_ratio", "log_bound"]);
        for s in &self.steps {
            let ratio = s.log_hc_ratio.map_or_else(|| "degenerate".into(), Into::into);
            t.push(vec![s.layer.into(), ratio, s.log_bound.into()]);
        }
        t
    }
}

pub fn sinusoidal_table(n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |pos, i| {
        let pair = (i / 2) as f64;
        let angle = pos as f64 / 10_000f64.powf(2.0 * pair / d as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Layer-0 features: embedding rows, plus positions when enabled.
pub fn token_features(params: &EncoderParams, tokens: &TokenSequence) -> DMatrix<f64> {
    let d = params.config.model_dim;
    let mut x = DMatrix::from_fn(tokens.len(), d, |i, j| params.embedding[(tokens.ids()[i], j)]);
    if params.config.positional == PositionalEncoding::Sinusoidal {
        x += sinusoidal_table(tokens.len(), d);
    }
    x
}

fn layer_norm(x: &mut DMatrix<f64>) {
    let d = x.ncols() as f64;
    for mut row in x.row_iter_mut() {
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
        let inv = 1.0 / (var + 1e-5).sqrt();
        row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    }
}

fn add_row(x: &mut DMatrix<f64>, bias: &DMatrix<f64>) {
    for mut row in x.row_iter_mut() {
        row += bias.row(0);
    }
}

fn check_tokens(params: &EncoderParams, tokens: &TokenSequence) -> Result<(), EncoderError> {
    match tokens.ids().iter().find(|&&t| t >= params.config.vocab_size) {
        Some(t) => Err(EncoderError::InvalidTokens(format!(
            "token {t} outside vocabulary of size {}",
            params.config.vocab_size
        ))),
        None => Ok(()),
    }
}

fn run(params: &EncoderParams, tokens: &TokenSequence, tau: f64, trace: bool) -> (DMatrix<f64>, LayerTrace) {
    let cfg = &params.config;
    let n = tokens.len();
    let hd = cfg.head_dim();
    let scale = 1.0 / (tau * (hd as f64).sqrt());
    let mut x = token_features(params, tokens);
    let mut steps = Vec::new();

    for (l, layer) in params.layers.iter().enumerate() {
        let hc_in = if trace { hc_of(&x).norm() } else { 0.0 };
        let mut concat = DMatrix::zeros(n, cfg.model_dim);
        let (mut sigma_a, mut sigma_1) = (0.0_f64, 0.0_f64);
        for (h, head) in layer.heads.iter().enumerate() {
            let q = &x * &head.w_q;
            let k = &x * &head.w_k;
            let v = &x * &head.w_v;
            // tau is folded into `scale`; softmax_rows then sees tau = 1.
            let a = softmax_rows(&((q * k.transpose()) * scale), 1.0);
            concat.columns_mut(h * hd, hd).copy_from(&(&a * v));
            if trace {
                sigma_a = sigma_a.max(sigma_a_of(&a));
                let value_map = &head.w_v * layer.w_o.rows(h * hd, hd);
                sigma_1 = sigma_1.max(spectral_norm(&value_map).value);
            }
        }
        let msa = concat * &layer.w_o;
        x = if cfg.use_residual { x + msa } else { msa };
        if cfg.use_layernorm {
            layer_norm(&mut x);
        }
        if cfg.use_ffn {
            let mut hidden = &x * &layer.w1;
            add_row(&mut hidden, &layer.b1);
            hidden.apply(|v| *v = v.max(0.0));
            let mut f = hidden * &layer.w2;
            add_row(&mut f, &layer.b2);
            x = if cfg.use_residual { x + f } else { f };
            if cfg.use_layernorm {
                layer_norm(&mut x);
            }
        }
        if trace {
            let hc_out = hc_of(&x).norm();
            let log_hc_ratio = (hc_in > 0.0 && hc_out > 0.0).then(|| (hc_out / hc_in).ln());
            steps.push(LayerStep {
                layer: l,
                hc_in,
                hc_out,
                log_hc_ratio,
                sigma_a,
                sigma_1,
                log_bound: (sigma_a * sigma_1 * cfg.heads as f64).ln(),
            });
        }
    }
    (x, LayerTrace { steps })
}

fn pool(params: &EncoderParams, x: &DMatrix<f64>, n: usize) -> EmbeddingVector {
    let values = match params.config.pooling {
        Pooling::Mean => x.row_sum().iter().map(|v| v / n as f64).collect(),
        Pooling::FirstToken => x.row(0).iter().copied().collect(),
    };
    EmbeddingVector {
        values,
        source_length: n,
    }
}

/// Final-layer token features before pooling.
pub fn hidden_states(params: &EncoderParams, tokens: &TokenSequence, tau: f64) -> Result<DMatrix<f64>, EncoderError> {
    check_tau(tau)?;
    check_tokens(params, tokens)?;
    Ok(run(params, tokens, tau, false).0)
}

/// Pooled embedding without the (comparatively expensive) per-layer trace.
pub fn embed(params: &EncoderParams, tokens: &TokenSequence, tau: f64) -> Result<EmbeddingVector, EncoderError> {
    let x = hidden_states(params, tokens, tau)?;
    Ok(pool(params, &x, tokens.len()))
}

/// Pooled embedding plus the per-layer HC trace.
pub fn encoder_forward(
    params: &EncoderParams,
    tokens: &TokenSequence,
    tau: f64,
) -> Result<(EmbeddingVector, LayerTrace), EncoderError> {
    check_tau(tau)?;
    check_tokens(params, tokens)?;
    let (x, trace) = run(params, tokens, tau, true);
    Ok((pool(params, &x, tokens.len()), trace))
}
