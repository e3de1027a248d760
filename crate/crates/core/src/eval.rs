//! Confusion counts and the six reported metrics, machine = positive class.
//!
//! A ratio whose denominator is zero is `None` (JSON `null`), never 0 or 1.
//! Values are kept at full precision; only the text rendering rounds.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Document, Label};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("no gold label for document {0:?}")]
    MissingGold(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, predicted: Label, gold: Label) {
        match (predicted, gold) {
            (Label::Machine, Label::Machine) => self.tp += 1,
            (Label::Machine, Label::Human) => self.fp += 1,
            (Label::Human, Label::Human) => self.tn += 1,
            (Label::Human, Label::Machine) => self.fn_ += 1,
        }
    }

    /// Associative, commutative combine of two partial tallies.
    pub fn merge(self, other: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> ConfusionCounts {
        let mut c = ConfusionCounts::default();
        for (p, g) in pairs {
            c.add(p, g);
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Rows are gold labels, columns predictions, both ordered human, machine.
    pub fn matrix(&self) -> [[u64; 2]; 2] {
        [[self.tn, self.fp], [self.fn_, self.tp]]
    }

    pub fn metrics<T: Scalar>(&self) -> Metrics<T> {
        let precision: Option<T> = ratio(self.tp, self.tp + self.fp);
        let recall: Option<T> = ratio(self.tp, self.tp + self.fn_);
        let f1 = match (&precision, &recall) {
            (Some(p), Some(r)) => f1_score(p.clone(), r.clone()),
            _ => None,
        };
        Metrics {
            accuracy: ratio(self.tp + self.tn, self.total()),
            precision,
            recall,
            f1,
            fpr: ratio(self.fp, self.fp + self.tn),
            fnr: ratio(self.fn_, self.fn_ + self.tp),
        }
    }

    pub fn to_csv(&self) -> String {
        let [[tn, fp], [fn_, tp]] = self.matrix();
        format!("gold\\pred,human,machine\nhuman,{tn},{fp}\nmachine,{fn_},{tp}\n")
    }

    pub fn to_table(&self) -> String {
        let [[tn, fp], [fn_, tp]] = self.matrix();
        let width = [tn, fp, fn_, tp].iter().map(|v| v.to_string().len()).max().unwrap().max(7);
        let mut out = String::new();
        writeln!(out, "{:<12}{:>w$}  {:>w$}", "gold \\ pred", "human", "machine", w = width).unwrap();
        writeln!(out, "{:<12}{:>w$}  {:>w$}", "human", tn, fp, w = width).unwrap();
        writeln!(out, "{:<12}{:>w$}  {:>w$}", "machine", fn_, tp, w = width).unwrap();
        out
    }
}

fn ratio<T: Scalar>(num: u64, den: u64) -> Option<T> {
    (den > 0).then(|| T::from_u64(num).unwrap() / T::from_u64(den).unwrap())
}

/// Harmonic mean of precision and recall; `None` when both are zero.
pub fn f1_score<T: Scalar>(precision: T, recall: T) -> Option<T> {
    let den = precision.clone() + recall.clone();
    if den == T::zero() {
        return None;
    }
    let two = T::one() + T::one();
    Some(two * precision * recall / den)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics<T> {
    pub accuracy: Option<T>,
    pub precision: Option<T>,
    pub recall: Option<T>,
    pub f1: Option<T>,
    pub fpr: Option<T>,
    pub fnr: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub positive_class: &'static str,
    pub counts: ConfusionCounts,
    #[serde(flatten)]
    pub metrics: Metrics<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slice_key: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slices: Option<BTreeMap<String, MetricsReport>>,
}

impl MetricsReport {
    pub fn from_counts(counts: ConfusionCounts) -> MetricsReport {
        MetricsReport {
            positive_class: "machine",
            counts,
            metrics: counts.metrics(),
            slice_key: None,
            slices: None,
        }
    }

    /// Plain-text summary rounded to three decimals.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "positive class: {}", self.positive_class).unwrap();
        writeln!(out, "documents: {}", self.counts.total()).unwrap();
        let m = &self.metrics;
        for (name, v) in [
            ("accuracy", m.accuracy),
            ("precision", m.precision),
            ("recall", m.recall),
            ("f1", m.f1),
            ("false positive rate", m.fpr),
            ("false negative rate", m.fnr),
        ] {
            match v {
                Some(v) => writeln!(out, "{name:<20} {v:.3}").unwrap(),
                None => writeln!(out, "{name:<20} n/a").unwrap(),
            }
        }
        out.push('\n');
        out.push_str(&self.counts.to_table());
        if let (Some(key), Some(slices)) = (&self.slice_key, &self.slices) {
            for (name, report) in slices {
                writeln!(out, "\n[{key} = {name}]").unwrap();
                out.push_str(&report.render_text());
            }
        }
        out
    }
}

pub fn compute_metrics(pairs: impl IntoIterator<Item = (Label, Label)>) -> Result<MetricsReport, EvalError> {
    let counts = ConfusionCounts::from_pairs(pairs);
    if counts.total() == 0 {
        return Err(EvalError::EmptyEvaluation);
    }
    Ok(MetricsReport::from_counts(counts))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceKey {
    Language,
    Generator,
    Source,
}

impl SliceKey {
    pub fn as_str(self) -> &'static str {
        match self {
            SliceKey::Language => "language",
            SliceKey::Generator => "generator",
            SliceKey::Source => "source",
        }
    }

    pub fn value_of(self, doc: &Document) -> &str {
        let v = match self {
            SliceKey::Language => &doc.language,
            SliceKey::Generator => &doc.generator,
            SliceKey::Source => &doc.source,
        };
        v.as_deref().unwrap_or("unknown")
    }
}

impl FromStr for SliceKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "language" => Ok(SliceKey::Language),
            "generator" | "model" => Ok(SliceKey::Generator),
            "source" => Ok(SliceKey::Source),
            other => Err(format!("unknown slice key {other:?} (expected language, generator or source)")),
        }
    }
}

/// Per-slice confusion counts. Slice totals always add up to the global total.
pub fn slice_counts<'a>(
    predictions: impl IntoIterator<Item = (Label, &'a Document)>,
    key: SliceKey,
) -> Result<BTreeMap<String, ConfusionCounts>, EvalError> {
    let mut slices: BTreeMap<String, ConfusionCounts> = BTreeMap::new();
    for (predicted, doc) in predictions {
        let gold = doc.label.ok_or_else(|| EvalError::MissingGold(doc.id.clone()))?;
        slices.entry(key.value_of(doc).to_string()).or_default().add(predicted, gold);
    }
    Ok(slices)
}

pub fn slice_report<'a>(
    predictions: impl IntoIterator<Item = (Label, &'a Document)>,
    key: SliceKey,
) -> Result<BTreeMap<String, MetricsReport>, EvalError> {
    Ok(slice_counts(predictions, key)?
        .into_iter()
        .map(|(k, c)| (k, MetricsReport::from_counts(c)))
        .collect())
}

/// Join predictions to gold documents by id and build the full report.
pub fn evaluate(
    predictions: &[(String, Label)],
    gold: &[Document],
    slice: Option<SliceKey>,
) -> Result<MetricsReport, EvalError> {
    let by_id: HashMap<&str, &Document> = gold.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut joined = Vec::with_capacity(predictions.len());
    for (id, predicted) in predictions {
        let doc = by_id.get(id.as_str()).ok_or_else(|| EvalError::MissingGold(id.clone()))?;
        if doc.label.is_none() {
            return Err(EvalError::MissingGold(id.clone()));
        }
        joined.push((*predicted, *doc));
    }
    let mut report = compute_metrics(joined.iter().map(|(p, d)| (*p, d.label.unwrap())))?;
    if let Some(key) = slice {
        report.slice_key = Some(key.as_str().to_string());
        report.slices = Some(slice_report(joined.iter().copied(), key)?);
    }
    Ok(report)
}
