//! Schema and dataset types, schema ingestion, and gold-label extraction.

mod io;
mod labels;
mod model;
pub mod sql;

use thiserror::Error;

pub use io::{load_schema, load_schemas, parse_schema, parse_spider_manifest, serialize_schema, SchemaFormat};
pub use labels::{build_labeled_example, labeled_from_positives, LabeledExample};
pub use model::{fold, ColumnDef, ColumnRef, DatabaseSchema, Dialect, ForeignKey, Provenance, TableDef};
pub use sql::{extract_gold_columns, SqlError};

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("{origin}:{line}:{column}: {message}")]
    Parse { origin: String, line: usize, column: usize, message: String },
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("invalid schema: {0}")]
    Invalid(String),
    #[error("reading {origin}: {source}")]
    Io {
        origin: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Sql(#[from] SqlError),
    #[error("no gold query references any column for question `{0}`")]
    EmptyPositives(String),
}
