//! Labelled JSONL corpora in the layout of the public M4 release.
//!
//! One record per line:
//! `{"id","text","label"(0|1, optional),"model","source","language"}`.
//! Fields the loader does not know are kept in [`Document::extra`] so a
//! record can be written back unchanged.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::segmenter::word_count;

/// Gold or predicted class. Serialized as `0` (human) / `1` (machine).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Human,
    Machine,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Human => 0,
            Label::Machine => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Human),
            1 => Some(Label::Machine),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Human => "human",
            Label::Machine => "machine",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        label_from_value(&v).map_err(serde::de::Error::custom)
    }
}

fn label_from_value(v: &Value) -> Result<Label, String> {
    v.as_u64()
        .and_then(|n| u8::try_from(n).ok())
        .and_then(Label::from_u8)
        .ok_or_else(|| format!("label must be 0 or 1, got {v}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: Option<Label>,
    pub language: Option<String>,
    pub generator: Option<String>,
    pub source: Option<String>,
    /// Unrecognised fields, in file order.
    pub extra: Map<String, Value>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            label: None,
            language: None,
            generator: None,
            source: None,
            extra: Map::new(),
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_language(mut self, language: impl Into<String>) -> Self {
        self.language = Some(language.into());
        self
    }

    /// Parse one JSONL record. `fallback_id` is used when the record has no `id`.
    pub fn from_json_line(line: &str, fallback_id: &str) -> Result<Document, String> {
        let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
        let Value::Object(mut obj) = value else {
            return Err("record is not a JSON object".into());
        };

        let id = match obj.remove("id") {
            None | Some(Value::Null) => fallback_id.to_string(),
            Some(Value::String(s)) if !s.is_empty() => s,
            Some(Value::Number(n)) => n.to_string(),
            Some(other) => return Err(format!("id must be a non-empty string, got {other}")),
        };
        let text = match obj.remove("text") {
            Some(Value::String(s)) => s.trim().to_string(),
            Some(_) => return Err("text must be a string".into()),
            None => return Err("missing field `text`".into()),
        };
        if text.is_empty() {
            return Err("empty text".into());
        }
        let label = match obj.remove("label") {
            None | Some(Value::Null) => None,
            Some(v) => Some(label_from_value(&v)?),
        };
        let language = optional_string(&mut obj, "language")?;
        if let Some(lang) = &language {
            let ok = (2..=3).contains(&lang.chars().count())
                && lang.chars().all(|c| c.is_ascii_lowercase());
            if !ok {
                return Err(format!("language must be a 2-3 letter lowercase code, got {lang:?}"));
            }
        }
        let generator = optional_string(&mut obj, "model")?;
        let source = optional_string(&mut obj, "source")?;

        Ok(Document { id, text, label, language, generator, source, extra: obj })
    }

    pub fn to_json_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("id".into(), Value::String(self.id.clone()));
        obj.insert("text".into(), Value::String(self.text.clone()));
        if let Some(label) = self.label {
            obj.insert("label".into(), Value::from(label.as_u8()));
        }
        if let Some(g) = &self.generator {
            obj.insert("model".into(), Value::String(g.clone()));
        }
        if let Some(s) = &self.source {
            obj.insert("source".into(), Value::String(s.clone()));
        }
        if let Some(l) = &self.language {
            obj.insert("language".into(), Value::String(l.clone()));
        }
        for (k, v) in &self.extra {
            obj.insert(k.clone(), v.clone());
        }
        Value::Object(obj)
    }

    pub fn to_json_line(&self) -> String {
        self.to_json_value().to_string()
    }
}

fn optional_string(obj: &mut Map<String, Value>, key: &str) -> Result<Option<String>, String> {
    match obj.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(format!("{key} must be a string, got {other}")),
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate document id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    #[default]
    Jsonl,
}

/// A record the lenient loader dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipReport {
    pub line: usize,
    pub reason: String,
}

/// Streaming JSONL reader. Holds one line at a time plus the set of seen ids.
pub struct CorpusReader<R> {
    reader: R,
    name: String,
    strict: bool,
    line_no: usize,
    buf: Vec<u8>,
    seen: HashSet<String>,
    skipped: Vec<SkipReport>,
    failed: bool,
}

impl<R: BufRead> CorpusReader<R> {
    /// `name` is the file name used for synthesized ids (`"<name>#<line>"`).
    pub fn new(reader: R, name: impl Into<String>, strict: bool) -> Self {
        CorpusReader {
            reader,
            name: name.into(),
            strict,
            line_no: 0,
            buf: Vec::new(),
            seen: HashSet::new(),
            skipped: Vec::new(),
            failed: false,
        }
    }

    pub fn skipped(&self) -> &[SkipReport] {
        &self.skipped
    }

    fn reject(&mut self, err: CorpusError) -> Option<Result<Document, CorpusError>> {
        if self.strict {
            self.failed = true;
            return Some(Err(err));
        }
        log::warn!("skipping record: {err}");
        self.skipped.push(SkipReport { line: self.line_no, reason: err.to_string() });
        None
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<Document, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.failed {
            self.buf.clear();
            match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e.into()));
                }
            }
            self.line_no += 1;
            let line = match std::str::from_utf8(&self.buf) {
                Ok(s) => s.trim_end_matches(['\n', '\r']),
                Err(e) => {
                    let err = CorpusError::MalformedRecord {
                        line: self.line_no,
                        reason: format!("invalid UTF-8: {e}"),
                    };
                    if let Some(r) = self.reject(err) {
                        return Some(r);
                    }
                    continue;
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let fallback = format!("{}#{}", self.name, self.line_no);
            let doc = match Document::from_json_line(line, &fallback) {
                Ok(doc) => doc,
                Err(reason) => {
                    let err = CorpusError::MalformedRecord { line: self.line_no, reason };
                    if let Some(r) = self.reject(err) {
                        return Some(r);
                    }
                    continue;
                }
            };
            if !self.seen.insert(doc.id.clone()) {
                let err = CorpusError::DuplicateId { id: doc.id, line: self.line_no };
                if let Some(r) = self.reject(err) {
                    return Some(r);
                }
                continue;
            }
            return Some(Ok(doc));
        }
        None
    }
}

/// Open a corpus file as a document stream.
pub fn load_corpus(
    path: &Path,
    format: CorpusFormat,
    strict: bool,
) -> Result<CorpusReader<BufReader<File>>, CorpusError> {
    let CorpusFormat::Jsonl = format;
    let file = File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => CorpusError::FileNotFound(path.to_path_buf()),
        _ => CorpusError::Io(e),
    })?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(CorpusReader::new(BufReader::new(file), name, strict))
}

/// Load a whole corpus into memory, returning documents plus skip reports.
pub fn read_corpus(path: &Path, strict: bool) -> Result<(Vec<Document>, Vec<SkipReport>), CorpusError> {
    let mut reader = load_corpus(path, CorpusFormat::Jsonl, strict)?;
    let docs = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok((docs, reader.skipped().to_vec()))
}

pub fn write_corpus<W: Write>(mut out: W, docs: &[Document]) -> io::Result<()> {
    for doc in docs {
        writeln!(out, "{}", doc.to_json_line())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WordCountQuantiles {
    pub min: usize,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CorpusStats {
    pub total: usize,
    pub by_label: BTreeMap<String, usize>,
    pub by_language: BTreeMap<String, usize>,
    pub by_generator: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub word_counts: Option<WordCountQuantiles>,
}

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
pub fn quantile(sorted: &[usize], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] as f64 + (sorted[hi] as f64 - sorted[lo] as f64) * frac
}

pub fn corpus_stats<'a>(docs: impl IntoIterator<Item = &'a Document>) -> CorpusStats {
    let mut stats = CorpusStats::default();
    let mut lengths = Vec::new();
    for doc in docs {
        stats.total += 1;
        let label = doc.label.map(|l| l.name()).unwrap_or("unlabeled");
        *stats.by_label.entry(label.to_string()).or_default() += 1;
        let lang = doc.language.as_deref().unwrap_or("unknown");
        *stats.by_language.entry(lang.to_string()).or_default() += 1;
        let generator = doc.generator.as_deref().unwrap_or("unknown");
        *stats.by_generator.entry(generator.to_string()).or_default() += 1;
        lengths.push(word_count(&doc.text));
    }
    if !lengths.is_empty() {
        lengths.sort_unstable();
        let sum: usize = lengths.iter().sum();
        stats.word_counts = Some(WordCountQuantiles {
            min: lengths[0],
            q25: quantile(&lengths, 0.25),
            median: quantile(&lengths, 0.5),
            q75: quantile(&lengths, 0.75),
            max: lengths[lengths.len() - 1],
            mean: sum as f64 / lengths.len() as f64,
        });
    }
    stats
}
