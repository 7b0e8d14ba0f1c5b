//! Offline inverted index over distinct cell values, scored with BM25.

mod dump;
mod file;
mod index;

use thiserror::Error;

use crate::schema::ColumnRef;

pub use dump::{parse_value_dump, read_value_dump};
pub use file::{deserialize_index, load_index, save_index, serialize_index, INDEX_TAG};
pub use index::{build_value_index, retrieve_values, Bm25Params, ColumnPostings, InvertedIndex, ValueHit};

#[derive(Debug, Error)]
pub enum ValueError {
    #[error("unknown column `{0}`")]
    UnknownColumn(ColumnRef),
    #[error("{origin}:{line}: {message}")]
    Dump { origin: String, line: usize, message: String },
    #[error(transparent)]
    Codec(#[from] crate::codec::CodecError),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}
