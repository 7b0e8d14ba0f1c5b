//! Question-aware schema filtering for text-to-SQL.
//!
//! Given a natural-language question and a relational schema, the engine
//! scores every column, refines the scores with a relation-aware graph
//! transformer over the schema's functional-dependency graph, and closes the
//! selected set under join connectivity with a Steiner-tree heuristic.

pub mod schema;
pub mod codec;
pub mod encoder;
pub mod graph;
pub mod text;
pub mod values;
pub mod reranker;
pub mod scalar;
pub mod steiner;
pub mod eval;
pub mod pipeline;
pub mod synth;

pub use scalar::Scalar;

/// Single-precision reranker, the configuration used by the command-line tool.
pub type Reranker = reranker::RerankerParams<f32>;
/// Double-precision reranker, used for gradient verification.
pub type Reranker64 = reranker::RerankerParams<f64>;
pub type Trace = reranker::Trace<f32>;
