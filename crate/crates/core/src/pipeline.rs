//! segment -> score -> vote, for one document or a whole corpus.

use std::thread;

use thiserror::Error;

use crate::corpus::Document;
use crate::ensemble::{Verdict, VoteError, VotingConfig};
use crate::scoring::{Scorer, ScoringError};
use crate::segmenter::{segment_text, SegmentError, SegmenterConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Vote(#[from] VoteError),
}

pub fn detect_document<S: Scorer + ?Sized>(
    doc: &Document,
    segmenter: &SegmenterConfig,
    scorer: &mut S,
    voting: &VotingConfig<f64>,
) -> Result<Verdict, DetectError> {
    let segments = segment_text(doc, segmenter)?;
    if segments.is_empty() {
        return Err(VoteError::EmptyScores.into());
    }
    let scores = scorer.score_segments(&segments)?;
    let weights: Vec<usize> = segments.iter().map(|s| s.word_count).collect();
    Ok(Verdict::from_scores(&doc.id, scores, &weights, voting)?)
}

/// Run detection over `docs` on `workers` threads.
///
/// Each worker gets a contiguous slice of the corpus and its own scorer from
/// `make_scorer`, so an external scorer handle is never shared. Results come
/// back in input order whatever the worker count.
pub fn detect_corpus<'m, F>(
    docs: &[Document],
    segmenter: &SegmenterConfig,
    voting: &VotingConfig<f64>,
    workers: usize,
    make_scorer: F,
) -> Vec<Result<Verdict, DetectError>>
where
    F: Fn() -> Result<Box<dyn Scorer + 'm>, ScoringError> + Sync,
{
    let workers = workers.max(1).min(docs.len().max(1));
    let chunk = docs.len().div_ceil(workers).max(1);
    let run = |part: &[Document]| -> Vec<Result<Verdict, DetectError>> {
        match make_scorer() {
            Ok(mut scorer) => part
                .iter()
                .map(|doc| detect_document(doc, segmenter, scorer.as_mut(), voting))
                .collect(),
            Err(e) => part.iter().map(|_| Err(e.clone().into())).collect(),
        }
    };
    if workers == 1 {
        return run(docs);
    }
    thread::scope(|scope| {
        let handles: Vec<_> = docs.chunks(chunk).map(|part| scope.spawn(move || run(part))).collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("detection worker panicked"))
            .collect()
    })
}
