//! Functional-dependency graph over schema columns, plus key recovery for
//! schemas that ship without declared keys.

mod fd;
mod file;
mod keys;

use thiserror::Error;

pub use fd::{build_fd_graph, Edge, EdgeKind, FdGraph};
pub use file::{deserialize_graph, load_graph, save_graph, serialize_graph, GRAPH_TAG};
pub use keys::{
    guess_primary_key, infer_keys_heuristic, merge_keys, parse_key_prediction, serialize_key_prediction, singular,
    stems, KeyConflict, KeyPrediction, MergeOutcome,
};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("key prediction: {0}")]
    Prediction(String),
    #[error(transparent)]
    Codec(#[from] crate::codec::CodecError),
    #[error(transparent)]
    Schema(#[from] crate::schema::SchemaError),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}
