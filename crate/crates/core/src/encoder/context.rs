use serde::{Deserialize, Serialize};

use super::EncoderError;
use crate::schema::{ColumnRef, DatabaseSchema};
use crate::values::{retrieve_values, InvertedIndex};

/// The eight-field description of one column that the scorer sees.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ColumnContext {
    pub table_name: String,
    pub column_name: String,
    pub table_description: String,
    pub column_description: String,
    pub data_type: String,
    pub sample_values: Vec<String>,
    pub missingness_flag: bool,
    pub value_description: String,
}

/// Where sample values come from.
#[derive(Debug, Clone, Copy)]
pub enum SampleSource<'a> {
    /// Query-aligned values from the index, falling back to the first stored sample.
    Retrieved(&'a InvertedIndex),
    /// The stored sample values, as shipped with the dataset.
    Provided,
    /// Only the first stored sample (no index available).
    FallbackOnly,
}

pub const DEFAULT_SAMPLE_K: usize = 2;

pub fn assemble_context(
    schema: &DatabaseSchema,
    column: &ColumnRef,
    query: &str,
    samples: SampleSource<'_>,
    k: usize,
) -> Result<ColumnContext, EncoderError> {
    let canonical = schema.canonical(column).ok_or_else(|| EncoderError::UnknownColumn(column.clone()))?;
    let table = schema.table(&canonical.table).expect("canonical column has a table");
    let def = table.column(&canonical.column).expect("canonical column exists");
    let fallback = || def.sample_values.iter().take(1).cloned().collect::<Vec<_>>();
    let sample_values = match samples {
        SampleSource::Retrieved(index) => {
            let hits = match index.column(&canonical) {
                Some(_) => retrieve_values(index, query, &canonical, k).map_err(|_| EncoderError::UnknownColumn(column.clone()))?,
                None => Vec::new(),
            };
            if hits.is_empty() {
                fallback()
            } else {
                hits.into_iter().map(|h| h.value).collect()
            }
        }
        SampleSource::Provided => def.sample_values.iter().take(k).cloned().collect(),
        SampleSource::FallbackOnly => fallback(),
    };
    Ok(ColumnContext {
        table_name: table.name.clone(),
        column_name: def.name.clone(),
        table_description: table.description.clone().unwrap_or_default(),
        column_description: def.description.clone().unwrap_or_default(),
        data_type: def.sql_type.clone(),
        sample_values,
        missingness_flag: def.nullable_flag,
        value_description: def.value_description.clone().unwrap_or_default(),
    })
}

/// Renders the context as labelled `key: value` lines in fixed field order.
pub fn render_context(ctx: &ColumnContext) -> String {
    let samples = serde_json::to_string(&ctx.sample_values).expect("strings serialize");
    format!(
        "Table name: {}\nColumn name: {}\nTable description: {}\nColumn description: {}\nData type: {}\nSample values: {}\nMissingness flag: {}\nValue description: {}",
        ctx.table_name,
        ctx.column_name,
        ctx.table_description,
        ctx.column_description,
        ctx.data_type,
        samples,
        ctx.missingness_flag,
        ctx.value_description
    )
}

/// Shrinks a context until `measure` fits `budget`: drops sample values from the end first,
/// then trims value, column and table descriptions word by word, in that order.
pub fn fit_context(ctx: &ColumnContext, budget: usize, measure: impl Fn(&ColumnContext) -> usize) -> ColumnContext {
    let mut out = ctx.clone();
    while measure(&out) > budget && out.sample_values.pop().is_some() {}
    let fields: [fn(&mut ColumnContext) -> &mut String; 3] =
        [|c| &mut c.value_description, |c| &mut c.column_description, |c| &mut c.table_description];
    for field in fields {
        while measure(&out) > budget {
            let text = field(&mut out);
            match text.rfind(' ') {
                Some(cut) => text.truncate(cut),
                None if !text.is_empty() => text.clear(),
                None => break,
            }
        }
    }
    out
}
