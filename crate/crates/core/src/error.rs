use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training data has no examples")]
    EmptyTrainingSet,
    #[error("training data contains only one class ({0})")]
    DegenerateTraining(crate::Label),
    #[error("loss became non-finite at epoch {epoch} (learning rate {learning_rate}); try a smaller rate")]
    NonFiniteLoss { epoch: usize, learning_rate: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad checkpoint: {0}")]
    Format(String),
}
