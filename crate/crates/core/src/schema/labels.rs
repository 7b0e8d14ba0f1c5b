use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::model::{ColumnRef, DatabaseSchema};
use super::sql::extract_gold_columns;
use super::SchemaError;

/// One supervised instance: a question with its relevant and irrelevant columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub question: String,
    pub db_id: String,
    pub positives: BTreeSet<ColumnRef>,
    pub negatives: BTreeSet<ColumnRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_sql: Option<String>,
}

impl LabeledExample {
    pub fn is_positive(&self, col: &ColumnRef) -> bool {
        self.positives.contains(col)
    }
}

/// Positives are the union of columns over all gold queries; every other schema column is negative.
pub fn build_labeled_example(
    question: &str,
    gold_sqls: &[&str],
    schema: &DatabaseSchema,
) -> Result<LabeledExample, SchemaError> {
    let mut positives = BTreeSet::new();
    for sql in gold_sqls {
        positives.extend(extract_gold_columns(sql, schema)?);
    }
    if positives.is_empty() {
        return Err(SchemaError::EmptyPositives(question.to_string()));
    }
    let negatives = schema.column_refs().into_iter().filter(|c| !positives.contains(c)).collect();
    Ok(LabeledExample {
        question: question.to_string(),
        db_id: schema.db_id.clone(),
        positives,
        negatives,
        gold_sql: gold_sqls.first().map(|s| s.to_string()),
    })
}

/// Labels from an explicit positive list, for datasets that ship column annotations.
pub fn labeled_from_positives(
    question: &str,
    positives: impl IntoIterator<Item = ColumnRef>,
    schema: &DatabaseSchema,
) -> Result<LabeledExample, SchemaError> {
    let mut pos = BTreeSet::new();
    for c in positives {
        let canon = schema
            .canonical(&c)
            .ok_or_else(|| SchemaError::DanglingReference(format!("labeled column `{c}` is not in `{}`", schema.db_id)))?;
        pos.insert(canon);
    }
    if pos.is_empty() {
        return Err(SchemaError::EmptyPositives(question.to_string()));
    }
    let negatives = schema.column_refs().into_iter().filter(|c| !pos.contains(c)).collect();
    Ok(LabeledExample { question: question.into(), db_id: schema.db_id.clone(), positives: pos, negatives, gold_sql: None })
}
