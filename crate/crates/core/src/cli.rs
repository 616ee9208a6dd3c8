//! The `lclab` command line.
//!
//! ```text
//! lclab verify   {lemma1|theorem2|theorem3|fenton|norm-lemma} [flags]
//! lclab simulate {collapse|repeated-token|sigma-a-sweep|word-mean} [flags]
//! lclab diagnose {embeddings|ranking} [flags]
//! ```
//!
//! Every target accepts `--seed`, `--out`, `--threads`, `--trials` and
//! `--config FILE`. The config file is a flat TOML table keyed by flag name
//! (`t-max = 50` or `t_max = 50`); flags given on the command line win.
//!
//! Each run writes its CSV tables and a `report.json` into the output
//! directory. The report is the only file carrying a timestamp.
//!
//! Exit codes: 0 all checks pass, 1 I/O or internal error, 2 usage error,
//! 3 input error, 4 check failure.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::attention::{sigma_a_sweep, sweep_table, AttentionConfig, AttentionError, SweepRow};
use crate::encoder::{
    collapse_sweep, collapse_table, encoder_forward, init_encoder, mean_word_embedding_similarity, repeated_table,
    repeated_token_experiment, word_mean_table, EncoderConfig, EncoderError, Pooling, PositionalEncoding,
    TokenSequence,
};
use crate::metrics::{
    centroid_distance_by_bucket, mean_rank_of_longest, pairwise_cosine_by_bucket, ranking_position_histogram,
    read_doc_lengths, read_embeddings, read_qrels, read_run, BucketSpec, MetricsError, RankingRun,
};
use crate::rng;
use crate::spectral::SpectralError;
use crate::table::Table;
use crate::verify::{
    fenton_suite, lemma1_suite, norm_lemma_suite, theorem2_suite, theorem3_suite, Check, FentonSuiteParams,
    Lemma1Params, NormLemmaParams, SuiteOutcome, Theorem2Params, Theorem3Params, VerifyError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "lclab", version, about = "Spectral filter-rate checks, length-collapse simulations and diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Randomised checks of the filter-rate results.
    #[command(subcommand)]
    Verify(VerifyTarget),
    /// Toy-encoder and attention sweeps.
    #[command(subcommand)]
    Simulate(SimulateTarget),
    /// Collapse diagnostics over imported embeddings or ranking runs.
    #[command(subcommand)]
    Diagnose(DiagnoseTarget),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CommonArgs {
    /// Master seed (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default `lclab-out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default 1).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Number of randomised trials or samples; meaning depends on the target.
    #[arg(long)]
    pub trials: Option<usize>,
    /// TOML file with default flag values.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum VerifyTarget {
    /// HC/DC ratio of A^t z decays under repeated attention.
    Lemma1 {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: Lemma1Args,
    },
    /// One-step filter-rate bound on random (X, A, W_V).
    Theorem2 {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: Theorem2Args,
    },
    /// sigma_a against length and the length bound.
    Theorem3 {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: Theorem3Args,
    },
    /// Log-normal sum approximation against Monte Carlo.
    Fenton {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: FentonArgs,
    },
    /// Frobenius/spectral product inequalities.
    NormLemma {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: NormLemmaArgs,
    },
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Lemma1Args {
    /// Sequence length (default 64).
    #[arg(long)]
    pub n: Option<usize>,
    /// Feature dimension (default 32).
    #[arg(long)]
    pub d: Option<usize>,
    /// Attention applications (default 100).
    #[arg(long)]
    pub t_max: Option<usize>,
    /// Largest HC/DC ratio allowed at t_max (default 1e-6).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Constant added to the random probe so its DC part is nonzero (default 1.0).
    #[arg(long, allow_negative_numbers = true)]
    pub probe_offset: Option<f64>,
    /// Fixed probe signal, comma separated; overrides --n.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub probe: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Theorem2Args {
    /// Smallest sequence length (default 4).
    #[arg(long)]
    pub n_min: Option<usize>,
    /// Largest sequence length (default 128).
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Slack on the bound, scaled by its magnitude (default 1e-9).
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Theorem3Args {
    /// Sequence lengths, comma separated (default 8,16,32,64,128,256).
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Feature dimension (default 32).
    #[arg(long)]
    pub d: Option<usize>,
    /// Softmax temperature (default 1.0).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Allowed ratio of mean sigma_a to the length bound (default 1.05).
    #[arg(long)]
    pub bound_factor: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FentonArgs {
    /// Summand counts, comma separated (default 10,100).
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Log-normal sigmas, comma separated (default 0.25,0.5,1.0).
    #[arg(long, value_delimiter = ',')]
    pub sigma: Option<Vec<f64>>,
    /// Monte Carlo samples per case; falls back to --trials.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Relative error allowed on mean and variance (default 0.1).
    #[arg(long)]
    pub rel_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct NormLemmaArgs {
    /// Largest matrix side (default 40).
    #[arg(long)]
    pub max_dim: Option<usize>,
    /// Slack on each inequality, scaled by the right-hand side (default 1e-9).
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum SimulateTarget {
    /// Mean pairwise cosine of pooled embeddings against length.
    Collapse {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: CollapseArgs,
    },
    /// Cosine between embeddings of [a; L] and [b; L].
    RepeatedToken {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: RepeatedArgs,
    },
    /// Mean sigma_a of sampled attention against length and temperature.
    SigmaASweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: SigmaSweepArgs,
    },
    /// Pairwise cosine of averaged word embeddings against length.
    WordMean {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: WordMeanArgs,
    },
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EncoderArgs {
    /// Encoder layers (default 4).
    #[arg(long)]
    pub layers: Option<usize>,
    /// Attention heads (default 4).
    #[arg(long)]
    pub heads: Option<usize>,
    /// Model width; must be a multiple of heads (default 64).
    #[arg(long)]
    pub model_dim: Option<usize>,
    /// Feed-forward width (default 128).
    #[arg(long)]
    pub ff_dim: Option<usize>,
    /// Vocabulary size (default 512).
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// Residual connections (default true).
    #[arg(long)]
    pub residual: Option<bool>,
    /// Feed-forward blocks (default true).
    #[arg(long)]
    pub ffn: Option<bool>,
    /// Layer norm after each block (default false).
    #[arg(long)]
    pub layernorm: Option<bool>,
    /// Positional encoding (default none; sinusoidal for repeated-token).
    #[arg(long, value_enum)]
    pub positional: Option<PositionalEncoding>,
    /// Pooling of the last hidden states (default mean).
    #[arg(long, value_enum)]
    pub pooling: Option<Pooling>,
}

impl EncoderArgs {
    fn resolve(&self, seed: u64, positional: PositionalEncoding) -> EncoderConfig {
        let d = EncoderConfig::default();
        EncoderConfig {
            layers: self.layers.unwrap_or(d.layers),
            heads: self.heads.unwrap_or(d.heads),
            model_dim: self.model_dim.unwrap_or(d.model_dim),
            ff_dim: self.ff_dim.unwrap_or(d.ff_dim),
            vocab_size: self.vocab_size.unwrap_or(d.vocab_size),
            use_residual: self.residual.unwrap_or(d.use_residual),
            use_ffn: self.ffn.unwrap_or(d.use_ffn),
            use_layernorm: self.layernorm.unwrap_or(d.use_layernorm),
            positional: self.positional.unwrap_or(positional),
            pooling: self.pooling.unwrap_or(d.pooling),
            seed,
            ..d
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CollapseArgs {
    /// Sequence lengths, comma separated (default 16,32,64,128,256).
    #[arg(long, value_delimiter = ',')]
    pub lengths: Option<Vec<usize>>,
    /// Softmax temperatures, comma separated (default 1.0).
    #[arg(long, value_delimiter = ',')]
    pub tau: Option<Vec<f64>>,
    /// Sequences per length; falls back to --trials.
    #[arg(long)]
    pub pairs: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub encoder: EncoderArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RepeatedArgs {
    /// Repetition counts, comma separated (default 1,2,4,...,256).
    #[arg(long, value_delimiter = ',')]
    pub lengths: Option<Vec<usize>>,
    /// Softmax temperature (default 1.0).
    #[arg(long)]
    pub tau: Option<f64>,
    /// First token id (default: drawn from the seed).
    #[arg(long)]
    pub token_a: Option<usize>,
    /// Second token id, distinct from the first (default: drawn from the seed).
    #[arg(long)]
    pub token_b: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub encoder: EncoderArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SigmaSweepArgs {
    /// Sequence lengths, comma separated (default 8,16,32,64,128,256).
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Softmax temperatures, comma separated (default 1.0).
    #[arg(long, value_delimiter = ',')]
    pub tau: Option<Vec<f64>>,
    /// Query/key dimension (default 32).
    #[arg(long)]
    pub d: Option<usize>,
    /// Query weight scale (default 1.0).
    #[arg(long)]
    pub sigma_q: Option<f64>,
    /// Key weight scale (default 1.0).
    #[arg(long)]
    pub sigma_k: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct WordMeanArgs {
    /// Sequence lengths, comma separated (default 16,32,64,128,256).
    #[arg(long, value_delimiter = ',')]
    pub lengths: Option<Vec<usize>>,
    /// Samples per length; falls back to --trials.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Embedding width (default 64).
    #[arg(long)]
    pub model_dim: Option<usize>,
    /// Vocabulary size (default 512).
    #[arg(long)]
    pub vocab_size: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum DiagnoseTarget {
    /// Bucketed pairwise cosine and centroid distance of a JSONL embedding file.
    Embeddings {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: EmbeddingsArgs,
    },
    /// Ranking-position histograms of the shortest and longest relevant documents.
    Ranking {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: RankingArgs,
    },
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EmbeddingsArgs {
    /// JSON Lines file of `{"id", "length", "vector"}` records
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Bucket edges, comma separated (default 0,100,200,300,400,500).
    #[arg(long, value_delimiter = ',')]
    pub buckets: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RankingArgs {
    /// Run file: `qid Q0 docid rank score tag`.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Qrels file: `qid 0 docid rel`.
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Document lengths: `docid length`.
    #[arg(long)]
    pub doc_lengths: Option<PathBuf>,
    /// Cohort size as a fraction of relevant documents, in (0, 0.5] (default 0.2)
    #[arg(long)]
    pub percentile: Option<f64>,
    /// Histogram bins over normalised rank (default 10)
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input(_) => EXIT_INPUT,
            CliError::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::Io(m) => m,
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<AttentionError> for CliError {
    fn from(e: AttentionError) -> Self {
        match e {
            AttentionError::Spectral(s) => s.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Spectral(s) => s.into(),
            VerifyError::Attention(a) => a.into(),
            VerifyError::InvalidParams(m) => CliError::Usage(m),
        }
    }
}

impl From<EncoderError> for CliError {
    fn from(e: EncoderError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::InvalidBuckets(_) | MetricsError::InvalidArgument(_) => CliError::Usage(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

/// Everything a target produces before anything touches the disk.
#[derive(Debug)]
struct Outcome {
    config: Value,
    tables: Vec<(String, Table)>,
    checks: Vec<Check>,
    /// Trend checks that are reported but never change the exit code.
    observations: Vec<Check>,
    summary: Value,
}

impl Outcome {
    fn new(config: Value) -> Self {
        Self {
            config,
            tables: Vec::new(),
            checks: Vec::new(),
            observations: Vec::new(),
            summary: Value::Null,
        }
    }

    fn from_suite(config: Value, file: &str, suite: SuiteOutcome) -> Self {
        let mut out = Self::new(config);
        out.tables.push((file.to_string(), suite.table));
        out.checks = suite.checks;
        out
    }
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub subcommand: String,
    pub passed: bool,
    pub timestamp_unix: f64,
    pub duration_seconds: f64,
    pub config: Value,
    pub checks: Vec<Check>,
    pub observations: Vec<Check>,
    pub summary: Value,
    pub artifacts: Vec<String>,
}

struct Resolved {
    seed: u64,
    out: PathBuf,
    threads: usize,
    trials: Option<usize>,
}

impl Resolved {
    fn echo(&self) -> Value {
        json!({
            "seed": self.seed,
            "out": self.out.display().to_string(),
            "threads": self.threads,
            "trials": self.trials,
        })
    }
}

fn object_of<T: Serialize>(value: &T) -> Result<Map<String, Value>, CliError> {
    match serde_json::to_value(value) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(CliError::Io("argument struct did not serialise to an object".into())),
        Err(e) => Err(CliError::Io(e.to_string())),
    }
}

/// Overlays command-line flags on the optional config file.
fn merge_args<L>(common: &CommonArgs, leaf: &L) -> Result<(Resolved, L), CliError>
where
    L: Serialize + DeserializeOwned + Default,
{
    let mut merged = Map::new();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        let known: BTreeSet<String> = object_of(&CommonArgs::default())?
            .into_iter()
            .chain(object_of(&L::default())?)
            .map(|(k, _)| k)
            .collect();
        for (key, value) in object_of(&table)? {
            let key = key.replace('_', "-");
            if !known.contains(&key) {
                return Err(CliError::Usage(format!("unknown key {key:?} in config {}", path.display())));
            }
            merged.insert(key, value);
        }
    }
    for (key, value) in object_of(common)?.into_iter().chain(object_of(leaf)?) {
        if !value.is_null() {
            merged.insert(key, value);
        }
    }
    let bad = |e: serde_json::Error| CliError::Usage(format!("invalid configuration value: {e}"));
    let c: CommonArgs = serde_json::from_value(Value::Object(merged.clone())).map_err(bad)?;
    let leaf: L = serde_json::from_value(Value::Object(merged)).map_err(bad)?;
    let threads = c.threads.unwrap_or(1);
    if threads == 0 {
        return Err(CliError::Usage("--threads must be >= 1".into()));
    }
    let resolved = Resolved {
        seed: c.seed.unwrap_or(0),
        out: c.out.unwrap_or_else(|| PathBuf::from("lclab-out")),
        threads,
        trials: c.trials,
    };
    Ok((resolved, leaf))
}

fn to_json<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).unwrap_or(Value::Null)
}

fn positive(name: &str, value: usize) -> Result<usize, CliError> {
    if value == 0 {
        return Err(CliError::Usage(format!("--{name} must be >= 1")));
    }
    Ok(value)
}

fn with_config(common: &Resolved, params: Value) -> Value {
    json!({ "common": common.echo(), "params": params })
}

// ------------------------------------------------------------------ verify

fn verify_lemma1(c: &Resolved, a: Lemma1Args) -> Result<Outcome, CliError> {
    let d = Lemma1Params::default();
    let params = Lemma1Params {
        trials: positive("trials", c.trials.unwrap_or(d.trials))?,
        n: a.n.unwrap_or(d.n),
        d: positive("d", a.d.unwrap_or(d.d))?,
        t_max: a.t_max.unwrap_or(d.t_max),
        threshold: a.threshold.unwrap_or(d.threshold),
        probe_offset: a.probe_offset.unwrap_or(d.probe_offset),
        probe: a.probe,
        seed: c.seed,
    };
    let suite = lemma1_suite(&params)?;
    Ok(Outcome::from_suite(with_config(c, to_json(&params)), "lemma1.csv", suite))
}

fn verify_theorem2(c: &Resolved, a: Theorem2Args) -> Result<Outcome, CliError> {
    let d = Theorem2Params::default();
    let params = Theorem2Params {
        trials: positive("trials", c.trials.unwrap_or(d.trials))?,
        n_min: a.n_min.unwrap_or(d.n_min),
        n_max: a.n_max.unwrap_or(d.n_max),
        tolerance: a.tolerance.unwrap_or(d.tolerance),
        seed: c.seed,
    };
    let suite = theorem2_suite(&params)?;
    Ok(Outcome::from_suite(with_config(c, to_json(&params)), "theorem2.csv", suite))
}

fn verify_theorem3(c: &Resolved, a: Theorem3Args) -> Result<Outcome, CliError> {
    let d = Theorem3Params::default();
    let params = Theorem3Params {
        n_values: a.n.unwrap_or(d.n_values),
        trials: positive("trials", c.trials.unwrap_or(d.trials))?,
        d: positive("d", a.d.unwrap_or(d.d))?,
        tau: a.tau.unwrap_or(d.tau),
        bound_factor: a.bound_factor.unwrap_or(d.bound_factor),
        seed: c.seed,
    };
    let suite = theorem3_suite(&params)?;
    Ok(Outcome::from_suite(with_config(c, to_json(&params)), "theorem3.csv", suite))
}

fn verify_fenton(c: &Resolved, a: FentonArgs) -> Result<Outcome, CliError> {
    let d = FentonSuiteParams::default();
    let params = FentonSuiteParams {
        n_values: a.n.unwrap_or(d.n_values),
        sigmas: a.sigma.unwrap_or(d.sigmas),
        samples: positive("samples", a.samples.or(c.trials).unwrap_or(d.samples))?,
        rel_tol: a.rel_tol.unwrap_or(d.rel_tol),
        seed: c.seed,
    };
    let suite = fenton_suite(&params)?;
    Ok(Outcome::from_suite(with_config(c, to_json(&params)), "fenton.csv", suite))
}

fn verify_norm_lemma(c: &Resolved, a: NormLemmaArgs) -> Result<Outcome, CliError> {
    let d = NormLemmaParams::default();
    let params = NormLemmaParams {
        trials: positive("trials", c.trials.unwrap_or(d.trials))?,
        max_dim: a.max_dim.unwrap_or(d.max_dim),
        tolerance: a.tolerance.unwrap_or(d.tolerance),
        seed: c.seed,
    };
    let suite = norm_lemma_suite(&params)?;
    Ok(Outcome::from_suite(with_config(c, to_json(&params)), "norm_lemma.csv", suite))
}

// ---------------------------------------------------------------- simulate

const DEFAULT_LENGTHS: [usize; 5] = [16, 32, 64, 128, 256];

fn cosine_range_check(name: &str, values: impl Iterator<Item = f64>) -> Check {
    let bad = values.filter(|v| !(-1.0 - 1e-12..=1.0 + 1e-12).contains(v)).count();
    Check::new(name, bad == 0, bad as f64, 0.0, "cosines outside [-1, 1] or not finite")
}

fn non_decreasing(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] < w[0]).count()
}

fn simulate_collapse(c: &Resolved, a: CollapseArgs) -> Result<Outcome, CliError> {
    let lengths = a.lengths.clone().unwrap_or(DEFAULT_LENGTHS.to_vec());
    let taus = a.tau.clone().unwrap_or(vec![1.0]);
    let per_length = a.pairs.or(c.trials).unwrap_or(200);
    let config = a.encoder.resolve(c.seed, PositionalEncoding::None);
    let params = init_encoder(&config)?;
    if lengths.is_empty() || taus.is_empty() {
        return Err(CliError::Usage("--lengths and --tau must be non-empty".into()));
    }

    let mut sweeps = Vec::with_capacity(taus.len());
    for &tau in &taus {
        sweeps.push(collapse_sweep(&params, &lengths, per_length, tau, c.seed)?);
    }
    // Rows interleaved by length, temperatures in the order given.
    let rows: Vec<_> = (0..lengths.len())
        .flat_map(|i| sweeps.iter().map(move |s| s[i]))
        .collect();

    let mut out = Outcome::new(with_config(
        c,
        json!({
            "lengths": lengths,
            "tau": taus,
            "sequences_per_length": per_length,
            "encoder": to_json(&config),
        }),
    ));
    out.tables.push(("collapse.csv".into(), collapse_table(&rows)));

    // Layer trace of one sequence at the longest length.
    let longest = *lengths.iter().max().unwrap_or(&1);
    let mut r = rng::seeded(rng::substream(c.seed, longest as u64));
    let probe = TokenSequence::random(&mut r, longest, config.vocab_size)?;
    for &tau in &taus {
        let (_, trace) = encoder_forward(&params, &probe, tau)?;
        out.tables.push((format!("layer_trace_tau{tau:.2}.csv"), trace.to_table()));
    }

    out.checks.push(cosine_range_check(
        "collapse.cosine_range",
        rows.iter().map(|r| r.mean_cos),
    ));
    for (tau, sweep) in taus.iter().zip(&sweeps) {
        let means: Vec<f64> = sweep.iter().map(|r| r.mean_cos).collect();
        let drops = non_decreasing(&means);
        out.observations.push(Check::new(
            format!("collapse.non_decreasing.tau{tau:.2}"),
            drops == 0,
            drops as f64,
            0.0,
            "adjacent lengths where mean cosine decreases",
        ));
    }
    Ok(out)
}

fn simulate_repeated(c: &Resolved, a: RepeatedArgs) -> Result<Outcome, CliError> {
    let lengths = a
        .lengths
        .clone()
        .unwrap_or_else(|| (0..=8).map(|k| 1usize << k).collect());
    let tau = a.tau.unwrap_or(1.0);
    let config = a.encoder.resolve(c.seed, PositionalEncoding::Sinusoidal);
    let params = init_encoder(&config)?;
    let mut r = rng::seeded(rng::substream(c.seed, u64::MAX));
    let token_a = a.token_a.unwrap_or_else(|| r.random_range(0..config.vocab_size));
    let token_b = match a.token_b {
        Some(b) => b,
        None => loop {
            let b = r.random_range(0..config.vocab_size);
            if b != token_a || config.vocab_size < 2 {
                break b;
            }
        },
    };
    let rows = repeated_token_experiment(&params, token_a, token_b, &lengths, tau)?;
    let mut out = Outcome::new(with_config(
        c,
        json!({
            "lengths": lengths,
            "tau": tau,
            "token_a": token_a,
            "token_b": token_b,
            "encoder": to_json(&config),
        }),
    ));
    out.checks.push(cosine_range_check("repeated_token.cosine_range", rows.iter().map(|r| r.cosine)));
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        out.observations.push(Check::new(
            "repeated_token.converges",
            last.cosine > first.cosine,
            last.cosine - first.cosine,
            0.0,
            "cosine at the longest length minus cosine at the shortest",
        ));
    }
    out.tables.push(("repeated_token.csv".into(), repeated_table(&rows)));
    Ok(out)
}

fn simulate_sigma_sweep(c: &Resolved, a: SigmaSweepArgs) -> Result<Outcome, CliError> {
    let n_values = a.n.clone().unwrap_or(vec![8, 16, 32, 64, 128, 256]);
    let taus = a.tau.clone().unwrap_or(vec![1.0]);
    let trials = positive("trials", c.trials.unwrap_or(100))?;
    let template = AttentionConfig::new(2, a.d.unwrap_or(32))
        .with_sigmas(a.sigma_q.unwrap_or(1.0), a.sigma_k.unwrap_or(1.0))
        .with_seed(c.seed);
    if taus.is_empty() {
        return Err(CliError::Usage("--tau must be non-empty".into()));
    }
    let sweeps = taus
        .iter()
        .map(|&tau| sigma_a_sweep(&n_values, &template.with_tau(tau), trials))
        .collect::<Result<Vec<Vec<SweepRow>>, _>>()?;
    let rows: Vec<SweepRow> = (0..n_values.len())
        .flat_map(|i| sweeps.iter().map(move |s| s[i]))
        .collect();

    let mut out = Outcome::new(with_config(
        c,
        json!({ "n": n_values, "tau": taus, "trials": trials, "attention": to_json(&template) }),
    ));
    let finite = rows.iter().filter(|r| !r.sigma_a_mean.is_finite()).count();
    out.checks.push(Check::new(
        "sigma_a_sweep.finite",
        finite == 0,
        finite as f64,
        0.0,
        "rows with a non-finite mean sigma_a",
    ));
    // Smaller temperatures should give larger filter rates at every length.
    let mut order: Vec<usize> = (0..taus.len()).collect();
    order.sort_by(|&i, &j| taus[j].total_cmp(&taus[i]));
    let inversions = (0..n_values.len())
        .flat_map(|k| {
            let sweeps = &sweeps;
            order.windows(2).map(move |w| (sweeps[w[0]][k].sigma_a_mean, sweeps[w[1]][k].sigma_a_mean))
        })
        .filter(|(hi_tau, lo_tau)| !(lo_tau > hi_tau))
        .count();
    out.observations.push(Check::new(
        "sigma_a_sweep.tau_order",
        inversions == 0,
        inversions as f64,
        0.0,
        "lengths where a smaller tau does not give a larger mean sigma_a",
    ));
    out.tables.push(("sigma_a_sweep.csv".into(), sweep_table(&rows)));
    Ok(out)
}

fn simulate_word_mean(c: &Resolved, a: WordMeanArgs) -> Result<Outcome, CliError> {
    let lengths = a.lengths.clone().unwrap_or(DEFAULT_LENGTHS.to_vec());
    let samples = a.samples.or(c.trials).unwrap_or(100);
    let d = EncoderConfig::default();
    let config = EncoderConfig {
        model_dim: a.model_dim.unwrap_or(d.model_dim),
        vocab_size: a.vocab_size.unwrap_or(d.vocab_size),
        seed: c.seed,
        ..d
    };
    let params = init_encoder(&config)?;
    let rows = mean_word_embedding_similarity(&params, &lengths, samples, c.seed)?;
    let mut out = Outcome::new(with_config(
        c,
        json!({
            "lengths": lengths,
            "samples": samples,
            "model_dim": config.model_dim,
            "vocab_size": config.vocab_size,
        }),
    ));
    out.checks.push(cosine_range_check("word_mean.cosine_range", rows.iter().map(|r| r.mean_cos)));
    let means: Vec<f64> = rows.iter().map(|r| r.mean_cos).collect();
    let drops = non_decreasing(&means);
    out.observations.push(Check::new(
        "word_mean.non_decreasing",
        drops == 0,
        drops as f64,
        0.0,
        "adjacent lengths where mean cosine decreases",
    ));
    out.tables.push(("word_mean.csv".into(), word_mean_table(&rows)));
    Ok(out)
}

// ---------------------------------------------------------------- diagnose

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: Result<T, MetricsError>) -> Result<T, CliError> {
    r.map_err(|e| match CliError::from(e) {
        CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn required(value: Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

fn diagnose_embeddings(c: &Resolved, a: EmbeddingsArgs) -> Result<Outcome, CliError> {
    let input = required(a.input, "input")?;
    let buckets = BucketSpec::new(a.buckets.unwrap_or(vec![0, 100, 200, 300, 400, 500]))?;
    let records = with_path(&input, read_embeddings(open(&input)?))?;
    let cos = pairwise_cosine_by_bucket(&records, &buckets)?;
    let dist = centroid_distance_by_bucket(&records, &buckets)?;

    let mut out = Outcome::new(with_config(
        c,
        json!({ "input": input.display().to_string(), "buckets": buckets.edges() }),
    ));
    let accounted: usize = cos.rows.iter().map(|r| r.count).sum::<usize>() + cos.out_of_range + cos.rejected.len();
    out.checks.push(Check::new(
        "embeddings.partition",
        accounted == records.len(),
        accounted.abs_diff(records.len()) as f64,
        0.0,
        "records read minus bucketed, out-of-range and rejected records",
    ));
    out.checks.push(cosine_range_check(
        "embeddings.cosine_range",
        cos.rows.iter().filter_map(|r| r.mean_cos),
    ));
    out.summary = json!({
        "records": records.len(),
        "out_of_range": cos.out_of_range,
        "rejected_zero_norm": cos.rejected,
    });
    out.tables.push(("embeddings_cosine.csv".into(), cos.to_table()));
    out.tables.push(("embeddings_centroid.csv".into(), dist.to_table()));
    Ok(out)
}

fn diagnose_ranking(c: &Resolved, a: RankingArgs) -> Result<Outcome, CliError> {
    let run_path = required(a.run, "run")?;
    let qrels_path = required(a.qrels, "qrels")?;
    let lengths_path = required(a.doc_lengths, "doc-lengths")?;
    let percentile = a.percentile.unwrap_or(0.2);
    let bins = a.bins.unwrap_or(10);

    let rankings = with_path(&run_path, read_run(open(&run_path)?))?;
    let qrels = with_path(&qrels_path, read_qrels(open(&qrels_path)?))?;
    let lengths = with_path(&lengths_path, read_doc_lengths(open(&lengths_path)?))?;
    let run = RankingRun::new(rankings, qrels, lengths)?;
    let hist = ranking_position_histogram(&run, percentile, bins)?;
    let longest = match mean_rank_of_longest(&run, percentile) {
        Ok(l) => Some(l),
        Err(MetricsError::InvalidRanking(_)) => None,
        Err(e) => return Err(e.into()),
    };

    let mut out = Outcome::new(with_config(
        c,
        json!({
            "run": run_path.display().to_string(),
            "qrels": qrels_path.display().to_string(),
            "doc_lengths": lengths_path.display().to_string(),
            "percentile": percentile,
            "bins": bins,
        }),
    ));
    for (name, h) in [("short", &hist.short), ("long", &hist.long)] {
        let total = h.counts.iter().sum::<usize>() + h.unranked;
        out.checks.push(Check::new(
            format!("ranking.conservation.{name}"),
            total == h.cohort_size,
            total.abs_diff(h.cohort_size) as f64,
            0.0,
            "cohort size minus histogram counts and unranked",
        ));
    }
    let mut summary = Table::new(["metric", "value"]);
    summary.push(vec!["short_cohort_size".into(), hist.short.cohort_size.into()]);
    summary.push(vec!["short_unranked".into(), hist.short.unranked.into()]);
    summary.push(vec!["long_cohort_size".into(), hist.long.cohort_size.into()]);
    summary.push(vec!["long_unranked".into(), hist.long.unranked.into()]);
    summary.push(vec!["mean_rank_longest".into(), longest.map(|l| l.mean_rank).into()]);
    out.summary = to_json(&longest);
    out.tables.push(("ranking_hist_short.csv".into(), hist.short.to_table()));
    out.tables.push(("ranking_hist_long.csv".into(), hist.long.to_table()));
    out.tables.push(("ranking_summary.csv".into(), summary));
    Ok(out)
}

// ---------------------------------------------------------------- driver

fn dispatch(command: Command) -> Result<(String, Resolved, Outcome), CliError> {
    macro_rules! go {
        ($name:expr, $common:expr, $args:expr, $f:ident) => {{
            let (resolved, args) = merge_args(&$common, &$args)?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(resolved.threads)
                .build()
                .map_err(|e| CliError::Io(e.to_string()))?;
            let outcome = pool.install(|| $f(&resolved, args))?;
            Ok(($name.to_string(), resolved, outcome))
        }};
    }
    match command {
        Command::Verify(t) => match t {
            VerifyTarget::Lemma1 { common, args } => go!("verify lemma1", common, args, verify_lemma1),
            VerifyTarget::Theorem2 { common, args } => go!("verify theorem2", common, args, verify_theorem2),
            VerifyTarget::Theorem3 { common, args } => go!("verify theorem3", common, args, verify_theorem3),
            VerifyTarget::Fenton { common, args } => go!("verify fenton", common, args, verify_fenton),
            VerifyTarget::NormLemma { common, args } => go!("verify norm-lemma", common, args, verify_norm_lemma),
        },
        Command::Simulate(t) => match t {
            SimulateTarget::Collapse { common, args } => go!("simulate collapse", common, args, simulate_collapse),
            SimulateTarget::RepeatedToken { common, args } => {
                go!("simulate repeated-token", common, args, simulate_repeated)
            }
            SimulateTarget::SigmaASweep { common, args } => {
                go!("simulate sigma-a-sweep", common, args, simulate_sigma_sweep)
            }
            SimulateTarget::WordMean { common, args } => go!("simulate word-mean", common, args, simulate_word_mean),
        },
        Command::Diagnose(t) => match t {
            DiagnoseTarget::Embeddings { common, args } => {
                go!("diagnose embeddings", common, args, diagnose_embeddings)
            }
            DiagnoseTarget::Ranking { common, args } => go!("diagnose ranking", common, args, diagnose_ranking),
        },
    }
}

fn write_outputs(name: &str, resolved: &Resolved, outcome: Outcome, started: Instant) -> Result<RunReport, CliError> {
    let io = |path: &Path, e: &dyn std::fmt::Display| CliError::Io(format!("cannot write {}: {e}", path.display()));
    fs::create_dir_all(&resolved.out).map_err(|e| io(&resolved.out, &e))?;
    let mut artifacts = Vec::new();
    for (file, table) in &outcome.tables {
        let path = resolved.out.join(file);
        table.write_path(&path).map_err(|e| io(&path, &e))?;
        artifacts.push(file.clone());
    }
    artifacts.push("report.json".into());
    let report = RunReport {
        subcommand: name.to_string(),
        passed: outcome.checks.iter().all(|c| c.passed),
        timestamp_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0),
        duration_seconds: started.elapsed().as_secs_f64(),
        config: outcome.config,
        checks: outcome.checks,
        observations: outcome.observations,
        summary: outcome.summary,
        artifacts,
    };
    let path = resolved.out.join("report.json");
    let text = serde_json::to_string_pretty(&report).map_err(|e| io(&path, &e))?;
    fs::write(&path, text + "\n").map_err(|e| io(&path, &e))?;
    Ok(report)
}

fn print_report(report: &RunReport, out: &Path) {
    println!("{} (output in {})", report.subcommand, out.display());
    for c in &report.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("  {status} {}: measured {} (tolerance {}) {}", c.name, c.measured, c.tolerance, c.detail);
    }
    for c in &report.observations {
        let status = if c.passed { "yes" } else { "no" };
        println!("  note {}: {status} ({})", c.name, c.measured);
    }
}

/// Parses `args` (program name first), runs the target and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let started = Instant::now();
    let result = dispatch(cli.command).and_then(|(name, resolved, outcome)| {
        let report = write_outputs(&name, &resolved, outcome, started)?;
        print_report(&report, &resolved.out);
        Ok(report)
    });
    match result {
        Ok(report) if report.passed => EXIT_OK,
        Ok(_) => EXIT_CHECK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
