//! Classifier over Universal POS tag sequences.
//!
//! Tags are embedded, run through stacked bidirectional LSTM layers, pooled
//! with a learned attention vector and mapped to a machine probability. The
//! model is trained from scratch with hand-written backpropagation through
//! time; [`gradcheck`] verifies those gradients against finite differences.

pub mod checkpoint;
pub mod gradcheck;
pub mod model;
pub mod tagger;
pub mod train;
pub mod upos;

use thiserror::Error;

pub use model::{ModelConfig, SyntaxModel};
pub use train::{train_syntax, SyntaxTrainConfig, TrainReport};
pub use upos::{upos_decode, upos_encode, UposSequence, UNK, UPOS_TAGS};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyntaxError {
    #[error("empty tag sequence for document {0:?}")]
    EmptySequence(String),
    #[error("tag id {0} is outside the UPOS vocabulary")]
    TagOutOfRange(u8),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("model has non-finite parameters")]
    NonFinite,
}
