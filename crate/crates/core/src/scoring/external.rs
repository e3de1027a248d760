//! Client side of the scorer protocol (v1).
//!
//! ```text
//! -> {"hello":"segvote-scorer","version":1}
//! <- {"ack":"segvote-scorer","version":1,"scorer_id":"..."}
//! -> {"id":"0","text":"..."}
//! <- {"id":"0","p_machine":0.97}      or   {"id":"0","error":"..."}
//! ```

use std::time::Duration;

use serde_json::{json, Value};

use super::{Scorer, ScoringError, SegmentScore};
use crate::protocol::{expect_reply_id, Endpoint, LineChannel, ProtocolError};
use crate::segmenter::Segment;

pub const SCORER_SERVICE: &str = "segvote-scorer";

/// One serial connection to an external scorer. Requests are pipelined per
/// call and replies are matched to requests by position and id.
pub struct ExternalScorer {
    channel: LineChannel,
    scorer_id: String,
    next_id: u64,
}

impl ExternalScorer {
    pub fn connect(endpoint: &Endpoint, timeout: Duration) -> Result<Self, ScoringError> {
        Self::handshake(endpoint.open(timeout)?)
    }

    /// Run the handshake over an already-open channel.
    pub fn handshake(mut channel: LineChannel) -> Result<Self, ScoringError> {
        let ack = channel.handshake(SCORER_SERVICE)?;
        let scorer_id = ack
            .get("scorer_id")
            .and_then(Value::as_str)
            .ok_or_else(|| ScoringError::ScorerProtocolError(format!("ack without scorer_id: {ack}")))?
            .to_string();
        Ok(ExternalScorer { channel, scorer_id, next_id: 0 })
    }

    fn parse_reply(reply: &Value) -> Result<f64, String> {
        if let Some(err) = reply.get("error") {
            return Err(match err {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            });
        }
        let p = reply
            .get("p_machine")
            .and_then(Value::as_f64)
            .ok_or_else(|| format!("reply without numeric p_machine: {reply}"))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(format!("p_machine {p} outside [0, 1]"));
        }
        Ok(p)
    }
}

impl Scorer for ExternalScorer {
    fn scorer_id(&self) -> &str {
        &self.scorer_id
    }

    fn score_segments(&mut self, segments: &[Segment]) -> Result<Vec<SegmentScore>, ScoringError> {
        let ids: Vec<String> = segments
            .iter()
            .map(|_| {
                let id = self.next_id.to_string();
                self.next_id += 1;
                id
            })
            .collect();
        let requests: Vec<Value> = segments
            .iter()
            .zip(&ids)
            .map(|(s, id)| json!({"id": id, "text": s.text}))
            .collect();
        self.channel.send_all(&requests)?;

        // Drain every reply even after a per-request error so the stream stays aligned.
        let mut scores = Vec::with_capacity(segments.len());
        let mut first_error = None;
        for (seg, id) in segments.iter().zip(&ids) {
            let reply = self.channel.recv()?;
            if let Err(e) = expect_reply_id(&reply, id) {
                self.channel.poison(&e);
                return Err(e.into());
            }
            match Self::parse_reply(&reply) {
                Ok(p) => scores.push(SegmentScore::from_probability(&seg.doc_id, seg.index, p, &self.scorer_id)),
                Err(msg) => {
                    first_error.get_or_insert(ProtocolError::Protocol(format!("request {id}: {msg}")));
                }
            }
        }
        match first_error {
            Some(e) => Err(e.into()),
            None => Ok(scores),
        }
    }
}
