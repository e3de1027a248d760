//! Combining segment probabilities into a document decision.
//!
//! All three rules use strict inequalities: a mean equal to the threshold,
//! a segment probability equal to the threshold, and a tie between machine
//! and human segment votes all resolve to [`Label::Human`].
//!
//! The rules are generic over [`Scalar`], so they run unchanged on `f64` and
//! on exact rationals.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::scalar::{mean, Scalar};
use crate::scoring::SegmentScore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "soft")]
    Soft,
    #[serde(rename = "hard")]
    Hard,
    #[serde(rename = "wsoft")]
    WeightedSoft,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Soft, Scheme::Hard, Scheme::WeightedSoft];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Soft => "soft",
            Scheme::Hard => "hard",
            Scheme::WeightedSoft => "wsoft",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "soft" => Ok(Scheme::Soft),
            "hard" => Ok(Scheme::Hard),
            "wsoft" | "weighted-soft" => Ok(Scheme::WeightedSoft),
            other => Err(format!("unknown voting scheme {other:?} (expected soft, hard or wsoft)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VoteError {
    #[error("no segment scores to vote on")]
    EmptyScores,
    #[error("{scores} scores but {weights} weights")]
    WeightMismatch { scores: usize, weights: usize },
    #[error("segment {0} has zero weight")]
    ZeroWeight(usize),
    #[error("threshold must lie strictly between 0 and 1")]
    InvalidThreshold,
}

pub const DEFAULT_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct VotingConfig<T> {
    pub scheme: Scheme,
    pub threshold: T,
}

impl<T: Scalar> VotingConfig<T> {
    pub fn new(scheme: Scheme, threshold: T) -> Result<Self, VoteError> {
        if threshold <= T::zero() || threshold >= T::one() {
            return Err(VoteError::InvalidThreshold);
        }
        Ok(VotingConfig { scheme, threshold })
    }
}

impl Default for VotingConfig<f64> {
    fn default() -> Self {
        VotingConfig { scheme: Scheme::WeightedSoft, threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vote<T> {
    pub aggregate: T,
    pub predicted: Label,
}

fn above<T: Scalar>(value: &T, threshold: &T) -> Label {
    if value > threshold {
        Label::Machine
    } else {
        Label::Human
    }
}

/// Mean probability, machine iff mean > threshold.
pub fn vote_soft<T: Scalar>(probs: &[T], threshold: &T) -> Result<Vote<T>, VoteError> {
    let aggregate = mean(probs).ok_or(VoteError::EmptyScores)?;
    let predicted = above(&aggregate, threshold);
    Ok(Vote { aggregate, predicted })
}

/// Fraction of segments above the threshold, machine iff more than half.
pub fn vote_hard<T: Scalar>(probs: &[T], threshold: &T) -> Result<Vote<T>, VoteError> {
    if probs.is_empty() {
        return Err(VoteError::EmptyScores);
    }
    let machine = probs.iter().filter(|p| *p > threshold).count();
    let aggregate = T::from_usize(machine).unwrap() / T::from_usize(probs.len()).unwrap();
    let predicted = if 2 * machine > probs.len() { Label::Machine } else { Label::Human };
    Ok(Vote { aggregate, predicted })
}

/// Word-count-weighted mean probability, machine iff it exceeds the threshold.
pub fn vote_weighted_soft<T: Scalar>(probs: &[T], weights: &[usize], threshold: &T) -> Result<Vote<T>, VoteError> {
    if probs.is_empty() {
        return Err(VoteError::EmptyScores);
    }
    if probs.len() != weights.len() {
        return Err(VoteError::WeightMismatch { scores: probs.len(), weights: weights.len() });
    }
    if let Some(i) = weights.iter().position(|w| *w == 0) {
        return Err(VoteError::ZeroWeight(i));
    }
    let mut num = T::zero();
    let mut den = T::zero();
    for (p, &w) in probs.iter().zip(weights) {
        let w = T::from_usize(w).unwrap();
        num = num + w.clone() * p.clone();
        den = den + w;
    }
    let aggregate = num / den;
    let predicted = above(&aggregate, threshold);
    Ok(Vote { aggregate, predicted })
}

pub fn vote<T: Scalar>(cfg: &VotingConfig<T>, probs: &[T], weights: &[usize]) -> Result<Vote<T>, VoteError> {
    match cfg.scheme {
        Scheme::Soft => vote_soft(probs, &cfg.threshold),
        Scheme::Hard => vote_hard(probs, &cfg.threshold),
        Scheme::WeightedSoft => vote_weighted_soft(probs, weights, &cfg.threshold),
    }
}

/// Final decision for one document, with the segment evidence behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub doc_id: String,
    pub predicted: Label,
    pub aggregate: f64,
    pub scheme: Scheme,
    pub threshold: f64,
    pub segment_scores: Vec<SegmentScore>,
    /// Word counts; present only for weighted voting.
    pub segment_weights: Option<Vec<usize>>,
}

impl Verdict {
    pub fn from_scores(
        doc_id: &str,
        scores: Vec<SegmentScore>,
        word_counts: &[usize],
        cfg: &VotingConfig<f64>,
    ) -> Result<Verdict, VoteError> {
        let probs: Vec<f64> = scores.iter().map(|s| s.p_machine).collect();
        let Vote { aggregate, predicted } = vote(cfg, &probs, word_counts)?;
        let segment_weights = (cfg.scheme == Scheme::WeightedSoft).then(|| word_counts.to_vec());
        Ok(Verdict {
            doc_id: doc_id.to_string(),
            predicted,
            aggregate,
            scheme: cfg.scheme,
            threshold: cfg.threshold,
            segment_scores: scores,
            segment_weights,
        })
    }

    pub fn to_record(&self) -> VerdictRecord {
        let segments = self
            .segment_scores
            .iter()
            .enumerate()
            .map(|(i, s)| SegmentRecord {
                index: s.index,
                p_machine: s.p_machine,
                weight: self.segment_weights.as_ref().map(|w| w[i]),
            })
            .collect();
        VerdictRecord {
            doc_id: self.doc_id.clone(),
            predicted: self.predicted.as_u8(),
            aggregate: self.aggregate,
            scheme: self.scheme,
            threshold: self.threshold,
            segments,
        }
    }
}

/// One line of a verdicts JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub doc_id: String,
    pub predicted: u8,
    pub aggregate: f64,
    pub scheme: Scheme,
    pub threshold: f64,
    #[serde(default)]
    pub segments: Vec<SegmentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub index: usize,
    pub p_machine: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weight: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    const TAU: f64 = 0.95;

    #[test]
    fn soft_examples() {
        let v = vote_soft(&[0.99, 0.97, 0.96], &TAU).unwrap();
        assert!((v.aggregate - 0.973_333_333_333).abs() < 1e-9);
        assert_eq!(v.predicted, Label::Machine);

        let v = vote_soft(&[0.95], &TAU).unwrap();
        assert_eq!(v.aggregate, 0.95);
        assert_eq!(v.predicted, Label::Human);

        let v = vote_soft(&[0.96, 0.96, 0.00], &TAU).unwrap();
        assert!((v.aggregate - 0.64).abs() < 1e-12);
        assert_eq!(v.predicted, Label::Human);
    }

    #[test]
    fn hard_examples() {
        let v = vote_hard(&[0.99, 0.99, 0.10], &TAU).unwrap();
        assert!((v.aggregate - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(v.predicted, Label::Machine);

        let v = vote_hard(&[0.99, 0.10], &TAU).unwrap();
        assert_eq!(v.aggregate, 0.5);
        assert_eq!(v.predicted, Label::Human);

        // soft and hard disagree on the same evidence
        assert_eq!(vote_hard(&[0.96, 0.96, 0.00], &TAU).unwrap().predicted, Label::Machine);
        assert_eq!(vote_soft(&[0.96, 0.96, 0.00], &TAU).unwrap().predicted, Label::Human);
    }

    #[test]
    fn weighted_examples() {
        let v = vote_weighted_soft(&[0.99, 0.40], &[1, 99], &TAU).unwrap();
        assert!((v.aggregate - 0.4059).abs() < 1e-12);
        assert_eq!(v.predicted, Label::Human);
    }

    #[test]
    fn errors() {
        assert_eq!(vote_soft::<f64>(&[], &TAU), Err(VoteError::EmptyScores));
        assert_eq!(vote_hard::<f64>(&[], &TAU), Err(VoteError::EmptyScores));
        assert_eq!(vote_weighted_soft::<f64>(&[], &[], &TAU), Err(VoteError::EmptyScores));
        assert_eq!(
            vote_weighted_soft(&[0.5, 0.5], &[1], &TAU),
            Err(VoteError::WeightMismatch { scores: 2, weights: 1 })
        );
        assert_eq!(vote_weighted_soft(&[0.5, 0.5], &[1, 0], &TAU), Err(VoteError::ZeroWeight(1)));
        for t in [0.0, 1.0, -0.5, 2.0] {
            assert_eq!(VotingConfig::new(Scheme::Soft, t), Err(VoteError::InvalidThreshold));
        }
    }

    #[test]
    fn exact_rationals() {
        let r = |n: i64, d: i64| Ratio::new(n, d);
        let tau = r(19, 20);
        let v = vote_weighted_soft(&[r(99, 100), r(40, 100)], &[1, 99], &tau).unwrap();
        assert_eq!(v.aggregate, r(4059, 10000));
        let v = vote_soft(&[r(19, 20)], &tau).unwrap();
        assert_eq!(v.predicted, Label::Human);
    }

    #[test]
    fn verdict_record_carries_weights_only_for_weighted_scheme() {
        let scores: Vec<_> = [0.9, 0.2]
            .iter()
            .enumerate()
            .map(|(i, p)| SegmentScore::from_probability("d", i, *p, "s"))
            .collect();
        let cfg = VotingConfig::new(Scheme::WeightedSoft, 0.5).unwrap();
        let v = Verdict::from_scores("d", scores.clone(), &[3, 1], &cfg).unwrap();
        let line = serde_json::to_string(&v.to_record()).unwrap();
        assert_eq!(
            line,
            r#"{"doc_id":"d","predicted":1,"aggregate":0.7250000000000001,"scheme":"wsoft","threshold":0.5,"segments":[{"index":0,"p_machine":0.9,"weight":3},{"index":1,"p_machine":0.2,"weight":1}]}"#
        );
        let cfg = VotingConfig::new(Scheme::Hard, 0.5).unwrap();
        let v = Verdict::from_scores("d", scores, &[3, 1], &cfg).unwrap();
        assert!(v.segment_weights.is_none());
        assert!(!serde_json::to_string(&v.to_record()).unwrap().contains("weight"));
    }

    fn probs_and_weights() -> impl Strategy<Value = Vec<(f64, usize)>> {
        prop::collection::vec((0.0f64..=1.0, 1usize..50), 1..12)
    }

    proptest! {
        #[test]
        fn permutation_invariance(mut pw in probs_and_weights(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let (p, w): (Vec<f64>, Vec<usize>) = pw.iter().cloned().unzip();
            let soft = vote_soft(&p, &TAU).unwrap();
            let hard = vote_hard(&p, &TAU).unwrap();
            let ws = vote_weighted_soft(&p, &w, &TAU).unwrap();
            pw.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (p2, w2): (Vec<f64>, Vec<usize>) = pw.into_iter().unzip();
            let soft2 = vote_soft(&p2, &TAU).unwrap();
            let ws2 = vote_weighted_soft(&p2, &w2, &TAU).unwrap();
            prop_assert!((soft.aggregate - soft2.aggregate).abs() < 1e-12);
            prop_assert_eq!(hard, vote_hard(&p2, &TAU).unwrap());
            prop_assert!((ws.aggregate - ws2.aggregate).abs() < 1e-12);
        }

        #[test]
        fn aggregates_are_bounded(pw in probs_and_weights()) {
            let (p, w): (Vec<f64>, Vec<usize>) = pw.into_iter().unzip();
            let lo = p.iter().cloned().fold(f64::INFINITY, f64::min) - 1e-12;
            let hi = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1e-12;
            let soft = vote_soft(&p, &TAU).unwrap().aggregate;
            let ws = vote_weighted_soft(&p, &w, &TAU).unwrap().aggregate;
            let hard = vote_hard(&p, &TAU).unwrap().aggregate;
            prop_assert!(lo <= soft && soft <= hi);
            prop_assert!(lo <= ws && ws <= hi);
            prop_assert!((0.0..=1.0).contains(&hard));
        }

        #[test]
        fn raising_a_score_never_flips_machine_to_human(
            pw in probs_and_weights(), idx in any::<prop::sample::Index>(), bump in 0.0f64..1.0,
        ) {
            let (p, w): (Vec<f64>, Vec<usize>) = pw.into_iter().unzip();
            let i = idx.index(p.len());
            let mut raised = p.clone();
            raised[i] = (raised[i] + bump).min(1.0);
            for scheme in Scheme::ALL {
                let cfg = VotingConfig { scheme, threshold: TAU };
                if vote(&cfg, &p, &w).unwrap().predicted == Label::Machine {
                    prop_assert_eq!(vote(&cfg, &raised, &w).unwrap().predicted, Label::Machine);
                }
            }
        }

        #[test]
        fn single_segment_collapses_schemes(p in 0.0f64..=1.0, w in 1usize..100, t in 0.01f64..0.99) {
            let expected = if p > t { Label::Machine } else { Label::Human };
            for scheme in Scheme::ALL {
                let cfg = VotingConfig { scheme, threshold: t };
                prop_assert_eq!(vote(&cfg, &[p], &[w]).unwrap().predicted, expected);
            }
        }

        #[test]
        fn equal_weights_match_soft(p in prop::collection::vec(0.0f64..=1.0, 1..10), w in 1usize..20) {
            let soft = vote_soft(&p, &TAU).unwrap();
            let ws = vote_weighted_soft(&p, &vec![w; p.len()], &TAU).unwrap();
            prop_assert!((soft.aggregate - ws.aggregate).abs() < 1e-12);
            if (soft.aggregate - TAU).abs() > 1e-9 {
                prop_assert_eq!(soft.predicted, ws.predicted);
            }
        }
    }
}
