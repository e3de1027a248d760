//! Logistic regression over hashed character n-gram counts.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::features::{featurize, FeatureConfig, SparseCounts};
use super::{Scorer, ScoringError, SegmentScore};
use crate::corpus::Label;
use crate::error::{CheckpointError, TrainError};
use crate::scalar::Real;
use crate::segmenter::Segment;

pub const CHECKPOINT_FORMAT: &str = "segvote-ngram";
pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub features: FeatureConfig,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            features: FeatureConfig::default(),
            epochs: 5,
            learning_rate: 0.05,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub examples: usize,
    /// Mean training loss before the first update, then after every epoch.
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgramScorerModel<F> {
    pub features: FeatureConfig,
    pub weights: Vec<F>,
    pub bias: F,
    pub meta: TrainMeta,
}

impl<F: Real> NgramScorerModel<F> {
    pub fn zeros(features: FeatureConfig) -> Self {
        NgramScorerModel { features, weights: vec![F::zero(); features.dim], bias: F::zero(), meta: TrainMeta::default() }
    }

    pub fn logit_of(&self, counts: &SparseCounts) -> F {
        counts
            .iter()
            .fold(self.bias, |acc, &(b, c)| acc + self.weights[b as usize] * F::from_u32(c).unwrap())
    }

    pub fn logit(&self, text: &str) -> F {
        self.logit_of(&featurize(text, &self.features))
    }

    pub fn probability(&self, text: &str) -> F {
        self.logit(text).sigmoid()
    }

    pub fn scorer(&self) -> BuiltinScorer<'_, F> {
        BuiltinScorer { model: self }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.features.validate()?;
        if self.weights.len() != self.features.dim {
            return Err(format!("{} weights for dim {}", self.weights.len(), self.features.dim));
        }
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err("non-finite parameter".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let weights: Vec<f64> = self.weights.iter().map(|w| w.to_f64().unwrap()).collect();
        serde_json::json!({
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "n_low": self.features.n_low,
            "n_high": self.features.n_high,
            "dim": self.features.dim,
            "bias": self.bias.to_f64().unwrap(),
            "weights": weights,
            "meta": self.meta,
        })
    }

    pub fn from_json(v: &Value) -> Result<Self, CheckpointError> {
        #[derive(Deserialize)]
        struct Raw {
            format: String,
            version: u64,
            n_low: usize,
            n_high: usize,
            dim: usize,
            bias: f64,
            weights: Vec<f64>,
            #[serde(default)]
            meta: TrainMeta,
        }
        let raw: Raw = serde_json::from_value(v.clone())?;
        if raw.format != CHECKPOINT_FORMAT {
            return Err(CheckpointError::Format(format!("expected format {CHECKPOINT_FORMAT:?}, got {:?}", raw.format)));
        }
        if raw.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Format(format!("unsupported version {}", raw.version)));
        }
        let cast = |x: f64| F::from_f64(x).ok_or_else(|| CheckpointError::Format(format!("unrepresentable value {x}")));
        let model = NgramScorerModel {
            features: FeatureConfig { n_low: raw.n_low, n_high: raw.n_high, dim: raw.dim },
            weights: raw.weights.into_iter().map(cast).collect::<Result<_, _>>()?,
            bias: cast(raw.bias)?,
            meta: raw.meta,
        };
        model.validate().map_err(CheckpointError::Format)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, &self.to_json())?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let v: Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        Self::from_json(&v)
    }
}

fn mean_loss<F: Real>(model: &NgramScorerModel<F>, data: &[(SparseCounts, F)]) -> F {
    // BCE in logit form: softplus(z) - y*z
    let total = data
        .iter()
        .map(|(x, y)| {
            let z = model.logit_of(x);
            z.softplus() - *y * z
        })
        .fold(F::zero(), |a, b| a + b);
    total / F::from_usize(data.len()).unwrap()
}

/// Train by shuffled mini-batch gradient descent on mean binary cross-entropy.
///
/// Shuffling uses a ChaCha8 stream seeded from `cfg.seed`, so the result is
/// bit-for-bit reproducible for a given example order.
pub fn train_ngram_scorer<F: Real>(
    examples: &[(&str, Label)],
    cfg: &TrainConfig,
) -> Result<NgramScorerModel<F>, TrainError> {
    cfg.features.validate().map_err(TrainError::InvalidConfig)?;
    if cfg.batch_size == 0 {
        return Err(TrainError::InvalidConfig("batch size must be at least 1".into()));
    }
    if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
        return Err(TrainError::InvalidConfig(format!("learning rate {}", cfg.learning_rate)));
    }
    let first = examples.first().ok_or(TrainError::EmptyTrainingSet)?.1;
    if examples.iter().all(|(_, l)| *l == first) {
        return Err(TrainError::DegenerateTraining(first));
    }

    let data: Vec<(SparseCounts, F)> = examples
        .iter()
        .map(|(text, label)| (featurize(text, &cfg.features), F::from_u8(label.as_u8()).unwrap()))
        .collect();

    let mut model = NgramScorerModel::<F>::zeros(cfg.features);
    let lr = F::lit(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = vec![mean_loss(&model, &data).to_f64().unwrap()];
    // sparse gradient accumulator
    let mut grad: Vec<(u32, F)> = Vec::new();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.clear();
            let mut bias_grad = F::zero();
            for &i in batch {
                let (x, y) = &data[i];
                let err = model.logit_of(x).sigmoid() - *y;
                bias_grad = bias_grad + err;
                grad.extend(x.iter().map(|&(b, c)| (b, err * F::from_u32(c).unwrap())));
            }
            let scale = lr / F::from_usize(batch.len()).unwrap();
            for &(b, g) in &grad {
                let w = &mut model.weights[b as usize];
                *w = *w - scale * g;
            }
            model.bias = model.bias - scale * bias_grad;
        }
        let loss = mean_loss(&model, &data).to_f64().unwrap();
        log::debug!("ngram epoch {epoch}: loss {loss:.6}");
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, learning_rate: cfg.learning_rate });
        }
        trace.push(loss);
    }

    model.meta = TrainMeta {
        seed: cfg.seed,
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        examples: data.len(),
        loss_trace: trace,
    };
    Ok(model)
}

pub const BUILTIN_SCORER_ID: &str = "ngram-lr";

/// Borrowing scorer over an immutable model; cheap to create per worker.
#[derive(Debug, Clone, Copy)]
pub struct BuiltinScorer<'a, F> {
    model: &'a NgramScorerModel<F>,
}

impl<F: Real> Scorer for BuiltinScorer<'_, F> {
    fn scorer_id(&self) -> &str {
        BUILTIN_SCORER_ID
    }

    fn score_segments(&mut self, segments: &[Segment]) -> Result<Vec<SegmentScore>, ScoringError> {
        Ok(segments
            .iter()
            .map(|s| {
                let z = self.model.logit(&s.text).to_f64().unwrap();
                SegmentScore::from_logit(&s.doc_id, s.index, z, BUILTIN_SCORER_ID)
            })
            .collect())
    }
}
