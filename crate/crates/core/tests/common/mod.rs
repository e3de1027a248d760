#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use segvote::corpus::{Document, Label};
use segvote::syntax::{UposSequence, UNK};

// ---------------------------------------------------------------- corpora

/// Two character processes over the same alphabet. Human words draw letters
/// uniformly; machine words favour a fixed subset and reuse a small stem list.
pub fn two_process_doc(rng: &mut ChaCha8Rng, id: &str, label: Label) -> Document {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
    const FAVOURED: &[u8] = b"aeilnorst";
    const STEMS: &[&str] = &["tion", "ment", "ally", "ing", "ness", "ize"];
    let sentences = rng.gen_range(3..7);
    let mut text = String::new();
    for s in 0..sentences {
        if s > 0 {
            text.push(' ');
        }
        let words = rng.gen_range(4..12);
        for w in 0..words {
            if w > 0 {
                text.push(' ');
            }
            let len = rng.gen_range(2..8);
            let mut word = String::new();
            for _ in 0..len {
                let c = match label {
                    Label::Human => ALPHABET[rng.gen_range(0..ALPHABET.len())],
                    Label::Machine if rng.gen_bool(0.6) => FAVOURED[rng.gen_range(0..FAVOURED.len())],
                    Label::Machine => ALPHABET[rng.gen_range(0..ALPHABET.len())],
                };
                word.push(c as char);
            }
            if label == Label::Machine && rng.gen_bool(0.3) {
                word.push_str(STEMS[rng.gen_range(0..STEMS.len())]);
            }
            if w == 0 {
                word[..1].make_ascii_uppercase();
            }
            text.push_str(&word);
        }
        text.push(*['.', '.', '!', '?'].choose(rng).unwrap());
    }
    let mut doc = Document::new(id, text).with_label(label).with_language("en");
    doc.generator = Some(if label == Label::Machine { "synth-m" } else { "human" }.into());
    doc.source = Some(if rng.gen_bool(0.5) { "wiki" } else { "news" }.into());
    doc
}

/// `per_class` documents of each label, interleaved.
pub fn two_process_corpus(per_class: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(2 * per_class);
    for i in 0..per_class {
        docs.push(two_process_doc(&mut rng, &format!("h{i:04}"), Label::Human));
        docs.push(two_process_doc(&mut rng, &format!("m{i:04}"), Label::Machine));
    }
    docs
}

/// Random ASCII text mixing words, markers, runs of markers, spaces and newlines.
pub fn random_ascii_text(rng: &mut ChaCha8Rng, max_tokens: usize) -> String {
    let n = rng.gen_range(0..=max_tokens);
    let mut text = String::new();
    for _ in 0..n {
        match rng.gen_range(0..10) {
            0 => text.push('\n'),
            1 => text.push_str(["!", "?", ".", "...", "?!", "\r\n"][rng.gen_range(0..6)]),
            2 => text.push_str(["  ", "\t", " \n "][rng.gen_range(0..3)]),
            _ => {
                let len = rng.gen_range(1..7);
                for _ in 0..len {
                    text.push(rng.gen_range(b'!'..=b'~') as char);
                }
                text.push(' ');
            }
        }
    }
    text
}

// ---------------------------------------------------------------- UPOS data

/// A first-order tag grammar: each of the 17 tags allows three successors.
pub struct TagGrammar {
    successors: Vec<[u8; 3]>,
}

impl TagGrammar {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let successors = (0..UNK)
            .map(|_| {
                let mut tags: Vec<u8> = (0..UNK).collect();
                tags.shuffle(&mut rng);
                [tags[0], tags[1], tags[2]]
            })
            .collect();
        TagGrammar { successors }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
        let mut tag = rng.gen_range(0..UNK);
        let mut out = vec![tag];
        while out.len() < len {
            tag = self.successors[tag as usize][rng.gen_range(0..3)];
            out.push(tag);
        }
        out
    }
}

/// `per_class` sequences from each of two grammars, shuffled.
pub fn grammar_corpus(per_class: usize, seed: u64) -> Vec<(UposSequence, Label)> {
    let human = TagGrammar::random(seed.wrapping_mul(2) + 1);
    let machine = TagGrammar::random(seed.wrapping_mul(2) + 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * per_class);
    for i in 0..per_class {
        for (g, label, p) in [(&human, Label::Human, "h"), (&machine, Label::Machine, "m")] {
            let len = rng.gen_range(8..20);
            let seq = UposSequence::from_ids(format!("{p}{i}"), g.sample(&mut rng, len)).unwrap();
            out.push((seq, label));
        }
    }
    out.shuffle(&mut rng);
    out
}

// ---------------------------------------------------------------- fake peers

/// What a scripted peer does after the handshake.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PeerMode {
    /// Answer each request; texts containing "zq" score 0.99, others 0.10.
    /// Texts containing "FAIL" get an error line, "WRONGID" gets a wrong id,
    /// "DIE" closes the connection, "HANG" stops answering.
    Normal,
    /// Acknowledge with this protocol version instead of 1.
    Version(u64),
    /// Never answer the hello.
    Silent,
    /// Read `n` requests before answering any of them.
    Batched(usize),
}

pub fn scripted_reply(request: &Value) -> Option<String> {
    let id = request["id"].clone();
    let text = request["text"].as_str().unwrap_or_default();
    if text.contains("DIE") || text.contains("HANG") {
        return None;
    }
    let reply = if text.contains("FAIL") {
        json!({"id": id, "error": "model refused"})
    } else if text.contains("WRONGID") {
        json!({"id": "bogus", "p_machine": 0.5})
    } else {
        json!({"id": id, "p_machine": if text.contains("zq") { 0.99 } else { 0.10 }})
    };
    Some(reply.to_string())
}

/// Serve one scorer session on `stream`. Returns the requests seen.
pub fn serve_scorer(stream: TcpStream, mode: PeerMode, service: &str) -> Vec<Value> {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut writer = stream;
    let mut seen = Vec::new();
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return seen;
    }
    let hello: Value = serde_json::from_str(&line).unwrap();
    assert_eq!(hello["hello"], service);
    let version = match mode {
        PeerMode::Silent => {
            thread::sleep(Duration::from_secs(3));
            return seen;
        }
        PeerMode::Version(v) => v,
        _ => 1,
    };
    let ack = json!({"ack": service, "version": version, "scorer_id": "fake"});
    writeln!(writer, "{ack}").unwrap();
    let batch = match mode {
        PeerMode::Batched(n) => n,
        _ => 1,
    };
    loop {
        let mut pending = Vec::new();
        while pending.len() < batch {
            line.clear();
            if reader.read_line(&mut line).unwrap_or(0) == 0 {
                return seen;
            }
            let request: Value = serde_json::from_str(&line).unwrap();
            seen.push(request.clone());
            pending.push(request);
        }
        for request in pending {
            let text = request["text"].as_str().unwrap_or_default().to_string();
            match scripted_reply(&request) {
                Some(reply) => {
                    if writeln!(writer, "{reply}").is_err() {
                        return seen;
                    }
                }
                None if text.contains("HANG") => {
                    thread::sleep(Duration::from_secs(3));
                    return seen;
                }
                None => return seen,
            }
        }
    }
}

/// Listen on an ephemeral port and serve `sessions` connections in turn.
pub fn spawn_tcp_peer(mode: PeerMode, service: &'static str, sessions: usize) -> (String, JoinHandle<Vec<Value>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for _ in 0..sessions {
            let (stream, _) = listener.accept().unwrap();
            seen.extend(serve_scorer(stream, mode, service));
        }
        seen
    });
    (addr, handle)
}

/// A fake tagger: tags each whitespace token by its first character
/// (uppercase NOUN, lowercase VERB, punctuation PUNCT); texts containing "FAIL"
/// get an error line.
pub fn spawn_tcp_tagger(wrong_id_on: Option<&'static str>) -> (String, JoinHandle<usize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let handle = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut writer = stream;
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        writeln!(writer, "{}", json!({"ack": "segvote-tagger", "version": 1})).unwrap();
        let mut served = 0;
        loop {
            line.clear();
            if reader.read_line(&mut line).unwrap_or(0) == 0 {
                return served;
            }
            let req: Value = serde_json::from_str(&line).unwrap();
            let text = req["text"].as_str().unwrap();
            let id = req["id"].as_str().unwrap();
            let reply = if text.contains("FAIL") {
                json!({"id": id, "error": "cannot parse"})
            } else if Some(id) == wrong_id_on {
                json!({"id": "elsewhere", "tags": ["X"]})
            } else {
                let tags: Vec<&str> = text
                    .split_whitespace()
                    .map(|w| match w.chars().next().unwrap() {
                        c if c.is_uppercase() => "NOUN",
                        c if c.is_alphabetic() => "VERB",
                        _ => "PUNCT",
                    })
                    .collect();
                json!({"id": id, "tags": tags})
            };
            served += 1;
            if writeln!(writer, "{reply}").is_err() {
                return served;
            }
        }
    });
    (addr, handle)
}

/// Shell peer speaking the scorer protocol over stdin/stdout; every request scores 0.97.
/// With `die_after`, it exits after that many replies.
pub fn shell_scorer(die_after: Option<usize>) -> String {
    let limit = die_after.map_or(String::from("1000000"), |n| n.to_string());
    format!(
        r#"read hello; echo '{{"ack":"segvote-scorer","version":1,"scorer_id":"sh"}}'; n=0; while [ $n -lt {limit} ] && read line; do id=$(printf '%s' "$line" | sed 's/.*"id":"\([^"]*\)".*/\1/'); echo "{{\"id\":\"$id\",\"p_machine\":0.97}}"; n=$((n+1)); done"#
    )
}
