//! Contextual topic modeling for short texts.
//!
//! Documents are preprocessed into bag-of-words form and modeled with LDA
//! (collapsed Gibbs sampling). Each document's topic mixture is scaled by a
//! weight `gamma` and concatenated with an externally supplied sentence
//! embedding. The fused vectors are compressed by a small dense autoencoder,
//! and the latent codes are clustered with k-means into contextual topics.
//! A softmax head over the embeddings assigns a polarity label to each
//! document, and both results are joined per cluster.
//!
//! Every numeric stage has a brute-force counterpart in the test suites.

pub mod attention;
pub mod autoencoder;
pub mod clustering;
pub mod corpus;
pub mod embeddings;
mod error;
pub mod fusion;
pub mod lda;
pub mod metrics;
pub mod pipeline;
pub mod sentiment;
mod serde_util;
pub mod synth;

pub use error::{Error, Result};
