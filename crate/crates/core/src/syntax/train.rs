//! Mini-batch SGD with global gradient-norm clipping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, SyntaxModel};
use super::upos::UposSequence;
use crate::corpus::Label;
use crate::error::TrainError;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntaxTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Batch gradients with a larger global norm are rescaled to this norm.
    pub clip_norm: f64,
    /// Seeds the shuffling stream; initialisation has its own seed.
    pub seed: u64,
    /// Stop once validation accuracy reaches this value.
    pub target_accuracy: Option<f64>,
}

impl Default for SyntaxTrainConfig {
    fn default() -> Self {
        SyntaxTrainConfig { epochs: 20, learning_rate: 0.5, batch_size: 16, clip_norm: 5.0, seed: 0, target_accuracy: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss and accuracy over the epoch, measured before each batch update.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub valid_loss: Option<f64>,
    pub valid_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

/// Mean loss and accuracy (threshold 0.5) of `model` on `data`.
pub fn evaluate_syntax<F: Real>(model: &SyntaxModel<F>, data: &[(UposSequence, Label)]) -> Option<(f64, f64)> {
    if data.is_empty() {
        return None;
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (seq, label) in data {
        let tags = &seq.tags[..seq.tags.len().min(model.config.max_len)];
        let fwd = model.forward(tags).ok()?;
        loss += fwd.loss(*label).to_f64().unwrap();
        correct += usize::from(predicted_label(fwd.p_machine.to_f64().unwrap(), 0.5) == *label);
    }
    Some((loss / data.len() as f64, correct as f64 / data.len() as f64))
}

pub fn predicted_label(p: f64, threshold: f64) -> Label {
    if p > threshold {
        Label::Machine
    } else {
        Label::Human
    }
}

pub fn train_syntax<F: Real>(
    config: ModelConfig,
    init_seed: u64,
    train: &[(UposSequence, Label)],
    valid: &[(UposSequence, Label)],
    cfg: &SyntaxTrainConfig,
) -> Result<(SyntaxModel<F>, TrainReport), TrainError> {
    if cfg.batch_size == 0 || cfg.clip_norm.is_nan() || cfg.clip_norm <= 0.0 {
        return Err(TrainError::InvalidConfig("batch size and clip norm must be positive".into()));
    }
    if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
        return Err(TrainError::InvalidConfig(format!("learning rate {}", cfg.learning_rate)));
    }
    let first = train.first().ok_or(TrainError::EmptyTrainingSet)?.1;
    if train.iter().all(|(_, l)| *l == first) {
        return Err(TrainError::DegenerateTraining(first));
    }
    if let Some((seq, _)) = train.iter().chain(valid).find(|(s, _)| s.tags.is_empty()) {
        return Err(TrainError::InvalidConfig(format!("empty tag sequence for {:?}", seq.doc_id)));
    }

    let mut model = SyntaxModel::<F>::init(config, init_seed).map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
    let lr = F::lit(cfg.learning_rate);
    let clip = F::lit(cfg.clip_norm);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = TrainReport::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = model.zeros_like();
            for &i in batch {
                let (seq, label) = &train[i];
                let tags = &seq.tags[..seq.tags.len().min(config.max_len)];
                let fwd = model.forward(tags).map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
                loss_sum += fwd.loss(*label).to_f64().unwrap();
                correct += usize::from(predicted_label(fwd.p_machine.to_f64().unwrap(), 0.5) == *label);
                let g = model.backward(&fwd, *label).map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
                grad.add_scaled(&g, F::one());
            }
            grad.scale(F::one() / F::from_usize(batch.len()).unwrap());
            let norm = grad.norm();
            if !norm.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, learning_rate: cfg.learning_rate });
            }
            if norm > clip {
                grad.scale(clip / norm);
            }
            model.add_scaled(&grad, -lr);
        }
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, learning_rate: cfg.learning_rate });
        }
        let valid_stats = evaluate_syntax(&model, valid);
        let stats = EpochStats {
            epoch,
            train_loss,
            train_accuracy: correct as f64 / train.len() as f64,
            valid_loss: valid_stats.map(|s| s.0),
            valid_accuracy: valid_stats.map(|s| s.1),
        };
        log::info!(
            "syntax epoch {epoch}: train loss {:.4} acc {:.3}, valid acc {}",
            stats.train_loss,
            stats.train_accuracy,
            stats.valid_accuracy.map_or("n/a".into(), |a| format!("{a:.3}"))
        );
        report.epochs.push(stats);
        if let (Some(target), Some((_, acc))) = (cfg.target_accuracy, valid_stats) {
            if acc >= target {
                break;
            }
        }
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(id: &str, tags: &[u8]) -> UposSequence {
        UposSequence::from_ids(id, tags.to_vec()).unwrap()
    }

    fn tiny() -> ModelConfig {
        ModelConfig { embed_dim: 4, hidden: 4, layers: 1, max_len: 32 }
    }

    fn data() -> Vec<(UposSequence, Label)> {
        (0..20)
            .map(|i| {
                if i % 2 == 0 {
                    (seq(&format!("h{i}"), &[5, 7, 15, 5, 7]), Label::Human)
                } else {
                    (seq(&format!("m{i}"), &[15, 15, 12, 15, 15]), Label::Machine)
                }
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let cfg = SyntaxTrainConfig { epochs: 2, learning_rate: 0.0, ..Default::default() };
        let (model, report) = train_syntax::<f64>(tiny(), 3, &data(), &[], &cfg).unwrap();
        assert_eq!(model, SyntaxModel::init(tiny(), 3).unwrap());
        assert_eq!(report.epochs.len(), 2);
        // the shuffled order changes only the summation order
        assert!((report.epochs[0].train_loss - report.epochs[1].train_loss).abs() < 1e-12);
    }

    #[test]
    fn fits_two_trivial_patterns() {
        let cfg = SyntaxTrainConfig { epochs: 30, ..Default::default() };
        let d = data();
        let (model, report) = train_syntax::<f64>(tiny(), 3, &d, &d, &cfg).unwrap();
        assert_eq!(report.last().unwrap().valid_accuracy, Some(1.0));
        assert!(model.predict(&[15, 15, 12, 15, 15]).unwrap() > 0.5);
        assert!(report.last().unwrap().train_loss < report.epochs[0].train_loss);
    }

    #[test]
    fn deterministic_loss_trace() {
        let cfg = SyntaxTrainConfig { epochs: 3, seed: 5, ..Default::default() };
        let (m1, r1) = train_syntax::<f64>(tiny(), 1, &data(), &[], &cfg).unwrap();
        let (m2, r2) = train_syntax::<f64>(tiny(), 1, &data(), &[], &cfg).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn rejects_single_class_and_empty_input() {
        let one: Vec<_> = data().into_iter().filter(|(_, l)| *l == Label::Human).collect();
        let cfg = SyntaxTrainConfig::default();
        assert!(matches!(train_syntax::<f64>(tiny(), 0, &one, &[], &cfg), Err(TrainError::DegenerateTraining(Label::Human))));
        assert!(matches!(train_syntax::<f64>(tiny(), 0, &[], &[], &cfg), Err(TrainError::EmptyTrainingSet)));
    }

    #[test]
    fn early_stop_on_target_accuracy() {
        let cfg = SyntaxTrainConfig { epochs: 50, target_accuracy: Some(1.0), ..Default::default() };
        let d = data();
        let (_, report) = train_syntax::<f64>(tiny(), 3, &d, &d, &cfg).unwrap();
        assert!(report.epochs.len() < 50);
        assert_eq!(report.last().unwrap().valid_accuracy, Some(1.0));
    }
}
