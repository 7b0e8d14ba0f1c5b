//! Relation-aware graph transformer that refines per-column vectors over the
//! dependency graph, a linear scoring head, losses, and training.

mod forward;
mod io;
mod loss;
mod params;
mod train;

use thiserror::Error;

pub use forward::{backward, forward, forward_trace, score, score_nodes, RelGraph, Trace};
pub use io::{deserialize_params, load_params, save_params, serialize_params};
pub use loss::{infonce_loss, margin_grad, margin_loss, margin_loss_pairs};
pub use params::{LayerParams, RerankerParams, RerankerShape};
pub use train::{
    dataset_loss, example_grad, sample_pairs, train, Optimizer, StepRecord, TrainExample, TrainReport,
    TrainingConfig,
};

#[derive(Debug, Error)]
pub enum RerankerError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("positive and negative sets must both be non-empty")]
    EmptySet,
    #[error("training diverged at step {step}: loss {loss} exceeds 10x the initial {initial}")]
    Diverged { step: usize, loss: f64, initial: f64 },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Codec(#[from] crate::codec::CodecError),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}
