//! Segment-and-vote detection of machine-generated text.
//!
//! A document is split into sentence-like segments, each segment receives a
//! machine probability from a [`scoring::Scorer`], and the per-segment
//! probabilities are combined by soft, hard or word-weighted soft voting.
//! The [`syntax`] module holds the alternative classifier over Universal POS
//! tag sequences (stacked BiLSTM with attention pooling), and [`eval`]
//! computes the usual binary metrics with machine text as the positive class.
//!
//! Numeric code is generic over the scalar type (see [`scalar`]); the aliases
//! below fix it to `f64`, which is what the pipeline and the CLI use.

pub mod cli;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod protocol;
pub mod scalar;
pub mod scoring;
pub mod segmenter;
pub mod syntax;

pub use corpus::{Document, Label};
pub use ensemble::{Scheme, Verdict};
pub use scalar::{Real, Scalar};
pub use segmenter::{Segment, SegmenterConfig};
pub use scoring::{Scorer, SegmentScore};

/// Voting configuration over `f64` probabilities.
pub type VotingConfig = ensemble::VotingConfig<f64>;
/// The built-in hashed n-gram scorer over `f64` weights.
pub type NgramScorerModel = scoring::ngram::NgramScorerModel<f64>;
/// The UPOS BiLSTM + attention classifier over `f64` parameters.
pub type SyntaxModel = syntax::model::SyntaxModel<f64>;
/// Binary metrics with `f64` ratios.
pub type Metrics = eval::Metrics<f64>;
