//! Column contexts, the relevance prompt, and embedding providers.

mod context;
mod hash;
mod prompt;
mod provider;
mod remote;

use thiserror::Error;

use crate::schema::ColumnRef;

pub use context::{assemble_context, fit_context, render_context, ColumnContext, SampleSource, DEFAULT_SAMPLE_K};
pub use hash::{fnv1a, hash_embed, hash_embed_query};
pub use prompt::{render_prompt, PromptTemplate};
pub use provider::{embed, embed_checked, CachedProvider, EmbeddingProvider, HashProvider};
pub use remote::{RemoteClient, RemoteConfig, RemoteProvider};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("unknown column `{0}`")]
    UnknownColumn(ColumnRef),
    #[error("prompt template: {0}")]
    Template(String),
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("server answered HTTP {0}")]
    Http(u16),
    #[error("server is over capacity; split the batch")]
    OverCapacity,
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("embedding has {found} dimensions, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("model version changed from `{pinned}` to `{found}` mid-run")]
    VersionChanged { pinned: String, found: String },
}
