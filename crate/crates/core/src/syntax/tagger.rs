//! Getting UPOS sequences for documents: from a pre-tagged JSONL file or from
//! an external tagger speaking the line-JSON protocol.
//!
//! Tagger session (same framing as the scorer):
//!
//! ```text
//! -> {"hello":"segvote-tagger","version":1}
//! <- {"ack":"segvote-tagger","version":1}
//! -> {"id":<doc id>,"text":"..."}
//! <- {"id":<doc id>,"tags":["DET","NOUN",...]}   or   {"id":...,"error":"..."}
//! ```

use std::io::BufRead;

use serde_json::{json, Value};

use super::upos::{upos_encode, UposSequence};
use crate::corpus::{Document, Label};
use crate::protocol::{expect_reply_id, LineChannel, ProtocolError};

pub const TAGGER_SERVICE: &str = "segvote-tagger";
const PIPELINE_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSkip {
    pub doc_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaggedCorpus {
    pub sequences: Vec<(UposSequence, Option<Label>)>,
    pub skipped: Vec<TagSkip>,
}

impl TaggedCorpus {
    /// Labelled sequences only.
    pub fn labelled(&self) -> Vec<(UposSequence, Label)> {
        self.sequences.iter().filter_map(|(s, l)| l.map(|l| (s.clone(), l))).collect()
    }
}

fn tags_from_value(v: &Value) -> Option<Vec<String>> {
    v.as_array()?.iter().map(|t| t.as_str().map(str::to_string)).collect()
}

/// Read `{"id","tags":[...],"label"?}` rows. Rows without usable tags are skipped with `MissingTags`.
pub fn read_tagged<R: BufRead>(reader: R, max_len: usize) -> Result<TaggedCorpus, std::io::Error> {
    let mut out = TaggedCorpus::default();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fallback = format!("line{}", n + 1);
        let row: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                out.skipped.push(TagSkip { doc_id: fallback, reason: format!("invalid JSON: {e}") });
                continue;
            }
        };
        let id = row.get("id").and_then(Value::as_str).map(str::to_string).unwrap_or(fallback);
        let label = match row.get("label") {
            None | Some(Value::Null) => None,
            Some(v) => match v.as_u64().and_then(|n| u8::try_from(n).ok()).and_then(Label::from_u8) {
                Some(l) => Some(l),
                None => {
                    out.skipped.push(TagSkip { doc_id: id, reason: format!("label must be 0 or 1, got {v}") });
                    continue;
                }
            },
        };
        let Some(tags) = row.get("tags").and_then(tags_from_value) else {
            out.skipped.push(TagSkip { doc_id: id, reason: "MissingTags".into() });
            continue;
        };
        match upos_encode(&id, &tags, max_len) {
            Ok(seq) => out.sequences.push((seq, label)),
            Err(e) => out.skipped.push(TagSkip { doc_id: id, reason: e.to_string() }),
        }
    }
    Ok(out)
}

pub struct TaggerClient {
    channel: LineChannel,
}

impl TaggerClient {
    pub fn handshake(mut channel: LineChannel) -> Result<Self, ProtocolError> {
        channel.handshake(TAGGER_SERVICE)?;
        Ok(TaggerClient { channel })
    }

    /// Tag every document. Per-document error replies become skips; a reply
    /// for the wrong id or a dead peer aborts with an error.
    pub fn tag_documents(&mut self, docs: &[Document], max_len: usize) -> Result<TaggedCorpus, ProtocolError> {
        let mut out = TaggedCorpus::default();
        for chunk in docs.chunks(PIPELINE_DEPTH) {
            let requests: Vec<Value> = chunk.iter().map(|d| json!({"id": d.id, "text": d.text})).collect();
            self.channel.send_all(&requests)?;
            for doc in chunk {
                let reply = self.channel.recv()?;
                if let Err(e) = expect_reply_id(&reply, &doc.id) {
                    self.channel.poison(&e);
                    return Err(e);
                }
                if let Some(err) = reply.get("error") {
                    let reason = err.as_str().map(str::to_string).unwrap_or_else(|| err.to_string());
                    log::warn!("tagger failed on {:?}: {reason}", doc.id);
                    out.skipped.push(TagSkip { doc_id: doc.id.clone(), reason });
                    continue;
                }
                let Some(tags) = reply.get("tags").and_then(tags_from_value) else {
                    let e = ProtocolError::Protocol(format!("reply for {:?} has no tag list", doc.id));
                    self.channel.poison(&e);
                    return Err(e);
                };
                match upos_encode(&doc.id, &tags, max_len) {
                    Ok(seq) => out.sequences.push((seq, doc.label)),
                    Err(e) => out.skipped.push(TagSkip { doc_id: doc.id.clone(), reason: e.to_string() }),
                }
            }
        }
        Ok(out)
    }
}
