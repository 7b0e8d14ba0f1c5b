//! Gold-column extraction from SQL text.

mod lexer;
mod parser;
mod resolve;

use std::collections::BTreeSet;

use thiserror::Error;

use super::model::{ColumnRef, DatabaseSchema};

pub use parser::parse_statement;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SqlError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unsupported SQL feature: {0}")]
    Unsupported(String),
    #[error("ambiguous column `{column}` (candidates: {})", candidates.join(", "))]
    Ambiguous { column: String, candidates: Vec<String> },
    #[error("unknown table or alias `{0}`")]
    UnknownTable(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
}

/// Every schema column referenced anywhere in `sql`, aliases resolved.
///
/// `SELECT *` and `t.*` count as references to every column they expand to;
/// `COUNT(*)` references nothing. Text inside string literals and comments is
/// never treated as a column.
pub fn extract_gold_columns(sql: &str, schema: &DatabaseSchema) -> Result<BTreeSet<ColumnRef>, SqlError> {
    let query = parse_statement(sql)?;
    let mut resolver = resolve::Resolver::new(schema);
    resolver.query(&query, None)?;
    Ok(resolver.found)
}
