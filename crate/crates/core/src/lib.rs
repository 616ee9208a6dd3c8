//! Numerical laboratory for the spectral view of self-attention.
//!
//! Softmax attention acts as a low-pass filter on token signals: repeated
//! application drives the high-frequency (non-constant) part of every feature
//! channel to zero relative to the constant (DC) part. The strength of this
//! filter grows with sequence length, which pulls the pooled embeddings of long
//! texts together ("length collapse"). Dividing attention logits by a
//! temperature `tau < 1` before the softmax counteracts the effect.
//!
//! The crate is organised by capability:
//!
//! - [`spectral`]: DFT, DC/HC projections, HC/DC energy ratios, spectral norm.
//! - [`attention`]: Gaussian-logit attention sampling, temperature-scaled
//!   softmax, the filter rate `sigma_a`, and checks of the filter-rate bounds
//!   and the Fenton-Wilkinson log-normal sum approximation.
//! - [`encoder`]: a toy multi-head transformer encoder with per-layer HC traces
//!   and the length-collapse sweeps.
//! - [`metrics`]: collapse diagnostics over imported embeddings and ranking runs.
//! - [`verify`]: seeded randomised suites behind `lclab verify`.
//! - [`cli`]: the `lclab` command line (verify / simulate / diagnose).
//!
//! Runnable walkthroughs for each capability live in `examples/`.

// Negated float comparisons are used so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod cli;
pub mod encoder;
pub mod metrics;
pub mod rng;
pub mod spectral;
pub mod table;
pub mod verify;

pub use nalgebra::DMatrix;
