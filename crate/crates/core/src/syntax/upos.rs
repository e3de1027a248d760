//! Universal POS tag inventory and tag-sequence encoding.

use serde::Serialize;

use super::SyntaxError;

/// The 17 UPOS tags; a tag's id is its position. Checkpoints depend on this order.
pub const UPOS_TAGS: [&str; 17] = [
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN", "PUNCT", "SCONJ",
    "SYM", "VERB", "X",
];

/// Reserved id for anything outside the inventory.
pub const UNK: u8 = 17;
pub const VOCAB_SIZE: usize = 18;
pub const DEFAULT_MAX_LEN: usize = 512;

pub fn tag_id(name: &str) -> Option<u8> {
    let name = name.trim();
    UPOS_TAGS.iter().position(|t| t.eq_ignore_ascii_case(name)).map(|i| i as u8)
}

pub fn tag_name(id: u8) -> &'static str {
    UPOS_TAGS.get(id as usize).copied().unwrap_or("UNK")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UposSequence {
    pub doc_id: String,
    pub tags: Vec<u8>,
    /// Input names that were not UPOS tags.
    pub unk_count: usize,
    /// Original length when the input was cut to the maximum length.
    pub truncated_from: Option<usize>,
}

impl UposSequence {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Build from raw ids, e.g. from a generator. Ids must be < `VOCAB_SIZE`.
    pub fn from_ids(doc_id: impl Into<String>, tags: Vec<u8>) -> Result<Self, SyntaxError> {
        let doc_id = doc_id.into();
        if tags.is_empty() {
            return Err(SyntaxError::EmptySequence(doc_id));
        }
        if let Some(&bad) = tags.iter().find(|&&t| t as usize >= VOCAB_SIZE) {
            return Err(SyntaxError::TagOutOfRange(bad));
        }
        Ok(UposSequence { doc_id, tags, unk_count: 0, truncated_from: None })
    }
}

/// Map tag names to ids, keeping the first `max_len` tags.
pub fn upos_encode<S: AsRef<str>>(doc_id: &str, names: &[S], max_len: usize) -> Result<UposSequence, SyntaxError> {
    if names.is_empty() || max_len == 0 {
        return Err(SyntaxError::EmptySequence(doc_id.to_string()));
    }
    let mut unk_count = 0;
    let mut tags: Vec<u8> = names
        .iter()
        .map(|n| {
            tag_id(n.as_ref()).unwrap_or_else(|| {
                unk_count += 1;
                UNK
            })
        })
        .collect();
    let truncated_from = (tags.len() > max_len).then_some(tags.len());
    tags.truncate(max_len);
    Ok(UposSequence { doc_id: doc_id.to_string(), tags, unk_count, truncated_from })
}

pub fn upos_decode(seq: &UposSequence) -> Vec<&'static str> {
    seq.tags.iter().map(|&t| tag_name(t)).collect()
}
