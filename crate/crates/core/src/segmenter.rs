//! Splits documents into sentence-like segments at terminal punctuation.
//!
//! Paragraphs (separated by one or more newlines) are segmented independently.
//! Inside a paragraph a run of consecutive markers (`"Wait...?!"`) ends the
//! current segment and stays attached to it. There is no abbreviation
//! handling: `"Dr. Who"` is two segments.

use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::Document;

pub const DEFAULT_MARKERS: [char; 6] = ['.', '!', '?', '。', '！', '？'];
pub const ARABIC_QUESTION_MARK: char = '؟';

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmenterConfig {
    pub markers: Vec<char>,
    /// Also split at U+061F ARABIC QUESTION MARK. Off by default.
    pub arabic_question_mark: bool,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig { markers: DEFAULT_MARKERS.to_vec(), arabic_question_mark: false }
    }
}

impl SegmenterConfig {
    pub fn is_marker(&self, c: char) -> bool {
        self.markers.contains(&c) || (self.arabic_question_mark && c == ARABIC_QUESTION_MARK)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
    /// Half-open interval of character (Unicode scalar) offsets into the source text.
    #[serde(skip)]
    pub span: Range<usize>,
    pub word_count: usize,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SegmentError {
    #[error("document {0:?} has no text")]
    EmptyDocument(String),
}

/// Number of maximal non-whitespace runs.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn is_paragraph_break(c: char) -> bool {
    c == '\n' || c == '\r'
}

/// Character spans of the segments of `text`, in order.
pub fn segment_spans(text: &str, cfg: &SegmenterConfig) -> Vec<Range<usize>> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut push = |mut start: usize, mut end: usize| {
        while start < end && chars[start].is_whitespace() {
            start += 1;
        }
        while end > start && chars[end - 1].is_whitespace() {
            end -= 1;
        }
        if start < end {
            spans.push(start..end);
        }
    };

    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if is_paragraph_break(c) {
            push(start, i);
            i += 1;
            start = i;
        } else if cfg.is_marker(c) {
            while i < chars.len() && cfg.is_marker(chars[i]) {
                i += 1;
            }
            push(start, i);
            start = i;
        } else {
            i += 1;
        }
    }
    push(start, chars.len());
    spans
}

pub fn segment_text(doc: &Document, cfg: &SegmenterConfig) -> Result<Vec<Segment>, SegmentError> {
    segment_str(&doc.id, &doc.text, cfg)
}

pub fn segment_str(doc_id: &str, text: &str, cfg: &SegmenterConfig) -> Result<Vec<Segment>, SegmentError> {
    if text.trim().is_empty() {
        return Err(SegmentError::EmptyDocument(doc_id.to_string()));
    }
    let chars: Vec<char> = text.chars().collect();
    let segments = segment_spans(text, cfg)
        .into_iter()
        .enumerate()
        .map(|(index, span)| {
            let text: String = chars[span.clone()].iter().collect();
            let word_count = word_count(&text);
            Segment { doc_id: doc_id.to_string(), index, text, span, word_count }
        })
        .collect();
    Ok(segments)
}

/// Wire form of a segment for `segvote segment` output.
#[derive(Debug, Serialize)]
pub struct SegmentRecord<'a> {
    pub doc_id: &'a str,
    pub index: usize,
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
    pub word_count: usize,
}

impl<'a> From<&'a Segment> for SegmentRecord<'a> {
    fn from(s: &'a Segment) -> Self {
        SegmentRecord {
            doc_id: &s.doc_id,
            index: s.index,
            text: &s.text,
            start: s.span.start,
            end: s.span.end,
            word_count: s.word_count,
        }
    }
}
