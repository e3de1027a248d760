//! JSON checkpoints: every parameter block as a flat array with its shape.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::model::{ModelConfig, SyntaxModel};
use super::upos::VOCAB_SIZE;
use crate::error::CheckpointError;
use crate::scalar::Real;

pub const CHECKPOINT_FORMAT: &str = "segvote-syntax";
pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct Block {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u64,
    vocab_size: usize,
    config: ModelConfig,
    seed: u64,
    blocks: Vec<Block>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    meta: Value,
}

pub fn to_json<F: Real>(model: &SyntaxModel<F>, meta: Value) -> Value {
    let blocks = model
        .blocks()
        .into_iter()
        .map(|b| Block { name: b.name, shape: b.shape, data: b.data.iter().map(|v| v.to_f64().unwrap()).collect() })
        .collect();
    let ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        vocab_size: VOCAB_SIZE,
        config: model.config,
        seed: model.seed,
        blocks,
        meta,
    };
    serde_json::to_value(ckpt).expect("checkpoint serializes")
}

pub fn from_json<F: Real>(value: Value) -> Result<SyntaxModel<F>, CheckpointError> {
    let ckpt: Checkpoint = serde_json::from_value(value)?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(CheckpointError::Format(format!("expected format {CHECKPOINT_FORMAT:?}, got {:?}", ckpt.format)));
    }
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Format(format!("unsupported version {}", ckpt.version)));
    }
    if ckpt.vocab_size != VOCAB_SIZE {
        return Err(CheckpointError::Format(format!("vocabulary size {} != {VOCAB_SIZE}", ckpt.vocab_size)));
    }
    ckpt.config.validate().map_err(|e| CheckpointError::Format(e.to_string()))?;
    let mut model = SyntaxModel::<F>::zeros(ckpt.config);
    model.seed = ckpt.seed;
    let expected_shapes: Vec<(String, Vec<usize>)> = model.blocks().into_iter().map(|b| (b.name, b.shape)).collect();
    if ckpt.blocks.len() != expected_shapes.len() {
        return Err(CheckpointError::Format(format!(
            "{} parameter blocks, expected {}",
            ckpt.blocks.len(),
            expected_shapes.len()
        )));
    }
    for (((name, dst), (_, shape)), block) in model.blocks_mut().into_iter().zip(&expected_shapes).zip(ckpt.blocks) {
        if block.name != name || &block.shape != shape || block.data.len() != dst.len() {
            return Err(CheckpointError::Format(format!(
                "block {:?} {:?} ({} values) does not match expected {name:?} {shape:?}",
                block.name,
                block.shape,
                block.data.len()
            )));
        }
        for (d, v) in dst.iter_mut().zip(block.data) {
            *d = F::from_f64(v).ok_or_else(|| CheckpointError::Format(format!("value {v} in {name}")))?;
        }
    }
    model.check().map_err(|e| CheckpointError::Format(e.to_string()))?;
    Ok(model)
}

pub fn save<F: Real>(model: &SyntaxModel<F>, meta: Value, path: &Path) -> Result<(), CheckpointError> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &to_json(model, meta))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load<F: Real>(path: &Path) -> Result<SyntaxModel<F>, CheckpointError> {
    let value: Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    from_json(value)
}
