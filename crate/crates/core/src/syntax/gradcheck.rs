//! Analytic gradients against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::model::{ModelConfig, SyntaxModel};
use super::upos::VOCAB_SIZE;
use super::SyntaxError;
use crate::corpus::Label;

pub const DEFAULT_EPSILON: f64 = 1e-4;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// The small configuration used for gradient checks: T=3, d=2, hidden=2, two layers.
pub fn tiny_config() -> ModelConfig {
    ModelConfig { embed_dim: 2, hidden: 2, layers: 2, max_len: 3 }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockCheck {
    pub name: String,
    pub params: usize,
    /// Largest `|a - fd| / (|a| + |fd| + 1e-12)` over the block.
    pub max_rel_error: f64,
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub tags: Vec<u8>,
    pub label: u8,
    pub epsilon: f64,
    pub tolerance: f64,
    pub blocks: Vec<BlockCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.max_rel_error < self.tolerance)
    }

    pub fn worst(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12)
}

/// Compare every parameter's analytic gradient with `(L(w+eps) - L(w-eps)) / 2eps`.
pub fn gradient_check(
    model: &SyntaxModel<f64>,
    tags: &[u8],
    label: Label,
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport, SyntaxError> {
    let fwd = model.forward(tags)?;
    let analytic = model.backward(&fwd, label)?;
    let names: Vec<String> = model.blocks().into_iter().map(|b| b.name).collect();
    let mut probe = model.clone();
    let mut blocks = Vec::with_capacity(names.len());
    for (b, name) in names.into_iter().enumerate() {
        let grad = analytic.blocks()[b].data.to_vec();
        let mut check = BlockCheck { name, params: grad.len(), max_rel_error: 0.0, worst_index: 0 };
        for (i, &a) in grad.iter().enumerate() {
            let original = probe.blocks_mut()[b].1[i];
            probe.blocks_mut()[b].1[i] = original + epsilon;
            let up = probe.forward(tags)?.loss(label);
            probe.blocks_mut()[b].1[i] = original - epsilon;
            let down = probe.forward(tags)?.loss(label);
            probe.blocks_mut()[b].1[i] = original;
            let numeric = (up - down) / (2.0 * epsilon);
            let err = relative_error(a, numeric);
            if err > check.max_rel_error {
                check.max_rel_error = err;
                check.worst_index = i;
            }
        }
        blocks.push(check);
    }
    Ok(GradCheckReport {
        seed: model.seed,
        tags: tags.to_vec(),
        label: label.as_u8(),
        epsilon,
        tolerance,
        blocks,
    })
}

/// Gradient check of a random model on a random sequence and label, all drawn from `seed`.
///
/// Every parameter is drawn from U(-1, 1) rather than the training
/// initialisation: with the small training scale some gradients are around
/// 1e-9, where finite-difference rounding noise alone exceeds the tolerance.
pub fn random_gradient_check(config: ModelConfig, seed: u64, epsilon: f64, tolerance: f64) -> Result<GradCheckReport, SyntaxError> {
    let mut model = SyntaxModel::<f64>::init(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for (_, block) in model.blocks_mut() {
        for w in block.iter_mut() {
            *w = rng.gen_range(-1.0..1.0);
        }
    }
    let tags: Vec<u8> = (0..config.max_len).map(|_| rng.gen_range(0..VOCAB_SIZE as u8)).collect();
    let label = if rng.gen_bool(0.5) { Label::Machine } else { Label::Human };
    gradient_check(&model, &tags, label, epsilon, tolerance)
}
