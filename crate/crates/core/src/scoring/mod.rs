//! Per-segment machine probabilities.
//!
//! Anything that maps a segment to `p(machine | segment)` can drive the
//! voting stage. Two implementations ship: the built-in hashed character
//! n-gram logistic regression ([`ngram`]) and a client for external models
//! speaking the line-JSON scorer protocol ([`external`]).

pub mod external;
pub mod features;
pub mod ngram;

use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::protocol::{Endpoint, ProtocolError};
use crate::scalar::Real;
use crate::segmenter::Segment;

pub use external::ExternalScorer;
pub use features::{featurize, FeatureConfig, SparseCounts};
pub use ngram::{BuiltinScorer, NgramScorerModel, TrainConfig};

/// Probabilities are kept inside `[P_CLAMP, 1 - P_CLAMP]` so logits stay finite.
pub const P_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentScore {
    pub doc_id: String,
    pub index: usize,
    pub p_machine: f64,
    pub logit: f64,
    pub scorer_id: String,
}

impl SegmentScore {
    pub fn from_probability(doc_id: &str, index: usize, p: f64, scorer_id: &str) -> SegmentScore {
        let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
        SegmentScore {
            doc_id: doc_id.to_string(),
            index,
            p_machine: p,
            logit: (p / (1.0 - p)).ln(),
            scorer_id: scorer_id.to_string(),
        }
    }

    pub fn from_logit(doc_id: &str, index: usize, logit: f64, scorer_id: &str) -> SegmentScore {
        let bound = ((1.0 - P_CLAMP) / P_CLAMP).ln();
        let logit = logit.clamp(-bound, bound);
        SegmentScore {
            doc_id: doc_id.to_string(),
            index,
            p_machine: logit.sigmoid(),
            logit,
            scorer_id: scorer_id.to_string(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),
    #[error("scorer protocol error: {0}")]
    ScorerProtocolError(String),
    #[error("scorer handshake timed out after {0:?}")]
    HandshakeTimeout(std::time::Duration),
    #[error("scorer protocol version mismatch: ours {ours}, theirs {theirs}")]
    VersionMismatch { ours: u64, theirs: u64 },
}

impl From<ProtocolError> for ScoringError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Unavailable(m) => ScoringError::ScorerUnavailable(m),
            ProtocolError::ReplyTimeout(t) => ScoringError::ScorerUnavailable(format!("no reply within {t:?}")),
            ProtocolError::HandshakeTimeout(t) => ScoringError::HandshakeTimeout(t),
            ProtocolError::VersionMismatch { ours, theirs } => ScoringError::VersionMismatch { ours, theirs },
            ProtocolError::Protocol(m) => ScoringError::ScorerProtocolError(m),
        }
    }
}

pub trait Scorer {
    fn scorer_id(&self) -> &str;

    /// Score segments in order. External scorers pipeline the whole slice.
    fn score_segments(&mut self, segments: &[Segment]) -> Result<Vec<SegmentScore>, ScoringError>;

    fn score_segment(&mut self, segment: &Segment) -> Result<SegmentScore, ScoringError> {
        let mut scores = self.score_segments(std::slice::from_ref(segment))?;
        Ok(scores.remove(0))
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn scorer_id(&self) -> &str {
        (**self).scorer_id()
    }

    fn score_segments(&mut self, segments: &[Segment]) -> Result<Vec<SegmentScore>, ScoringError> {
        (**self).score_segments(segments)
    }
}

/// `builtin:PATH | exec:CMD | tcp:HOST:PORT`
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScorerSelector {
    Builtin(PathBuf),
    External(Endpoint),
}

impl FromStr for ScorerSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("scorer must be builtin:PATH, exec:CMD or tcp:HOST:PORT, got {s:?}"))?;
        if rest.is_empty() {
            return Err(format!("empty scorer target in {s:?}"));
        }
        match kind {
            "builtin" => Ok(ScorerSelector::Builtin(PathBuf::from(rest))),
            "exec" => Ok(ScorerSelector::External(Endpoint::Exec(rest.to_string()))),
            "tcp" => Ok(ScorerSelector::External(Endpoint::Tcp(rest.to_string()))),
            other => Err(format!("unknown scorer kind {other:?}")),
        }
    }
}

/// Score with a fixed logit; used for tests and as a null scorer.
#[derive(Debug, Clone)]
pub struct ConstantScorer {
    pub p_machine: f64,
    pub id: String,
}

impl Scorer for ConstantScorer {
    fn scorer_id(&self) -> &str {
        &self.id
    }

    fn score_segments(&mut self, segments: &[Segment]) -> Result<Vec<SegmentScore>, ScoringError> {
        Ok(segments
            .iter()
            .map(|s| SegmentScore::from_probability(&s.doc_id, s.index, self.p_machine, &self.id))
            .collect())
    }
}
