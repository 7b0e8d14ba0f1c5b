use std::collections::{BTreeMap, HashMap, HashSet};

use super::ValueError;
use crate::schema::{ColumnRef, DatabaseSchema};
use crate::text::tokenize;

/// BM25 knobs. `max_token_chars` caps how much of a value is tokenized; the value is stored whole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub max_token_chars: usize,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75, max_token_chars: 512 }
    }
}

/// Postings for one column. Value ids index `values` and `doc_len`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColumnPostings {
    pub(super) values: Vec<String>,
    pub(super) doc_len: Vec<u32>,
    pub(super) postings: BTreeMap<String, Vec<(u32, u32)>>,
}

impl ColumnPostings {
    fn insert(&mut self, value: String, max_chars: usize) {
        let id = self.values.len() as u32;
        let head: String = value.chars().take(max_chars).collect();
        let tokens = tokenize(&head);
        self.doc_len.push(tokens.len() as u32);
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in tokens {
            *tf.entry(t).or_default() += 1;
        }
        for (t, n) in tf {
            self.postings.entry(t).or_default().push((id, n));
        }
        self.values.push(value);
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn doc_count(&self) -> usize {
        self.values.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        if self.doc_len.is_empty() {
            0.0
        } else {
            self.doc_len.iter().map(|&l| l as f64).sum::<f64>() / self.doc_len.len() as f64
        }
    }

    pub fn postings(&self, term: &str) -> &[(u32, u32)] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    /// Checks the structural invariants (used after decoding).
    pub(super) fn check(&self) -> Result<(), String> {
        if self.doc_len.len() != self.values.len() {
            return Err("doc length table does not match value count".into());
        }
        let mut lens = vec![0u32; self.values.len()];
        for (term, list) in &self.postings {
            for &(id, tf) in list {
                let slot = lens.get_mut(id as usize).ok_or_else(|| format!("posting for `{term}` has bad id {id}"))?;
                *slot += tf;
            }
        }
        if lens != self.doc_len {
            return Err("doc lengths disagree with postings".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueHit {
    pub value: String,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InvertedIndex {
    pub(super) params: Bm25Params,
    pub(super) columns: BTreeMap<ColumnRef, ColumnPostings>,
}

impl InvertedIndex {
    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn column(&self, col: &ColumnRef) -> Option<&ColumnPostings> {
        self.columns.get(col)
    }

    pub fn columns(&self) -> impl Iterator<Item = (&ColumnRef, &ColumnPostings)> {
        self.columns.iter()
    }
}

/// Indexes the distinct values of every column. Columns without values get empty postings.
pub fn build_value_index<I>(schema: &DatabaseSchema, values: I, params: Bm25Params) -> Result<InvertedIndex, ValueError>
where
    I: IntoIterator<Item = (ColumnRef, String)>,
{
    let mut columns: BTreeMap<ColumnRef, ColumnPostings> =
        schema.column_refs().into_iter().map(|c| (c, ColumnPostings::default())).collect();
    let mut seen: HashMap<ColumnRef, HashSet<String>> = HashMap::new();
    for (col, value) in values {
        let canonical = schema.canonical(&col).ok_or_else(|| ValueError::UnknownColumn(col.clone()))?;
        if seen.entry(canonical.clone()).or_default().insert(value.clone()) {
            columns.get_mut(&canonical).expect("every schema column is present").insert(value, params.max_token_chars);
        }
    }
    Ok(InvertedIndex { params, columns })
}

/// BM25-ranked values of `column` for `query`: positive scores only, best first, ties by value text.
pub fn retrieve_values(
    index: &InvertedIndex,
    query: &str,
    column: &ColumnRef,
    k: usize,
) -> Result<Vec<ValueHit>, ValueError> {
    let col = index.columns.get(column).ok_or_else(|| ValueError::UnknownColumn(column.clone()))?;
    let n = col.doc_count() as f64;
    if n == 0.0 || k == 0 {
        return Ok(Vec::new());
    }
    let Bm25Params { k1, b, .. } = index.params;
    let avgdl = col.avg_doc_len().max(f64::MIN_POSITIVE);
    let terms: std::collections::BTreeSet<String> = tokenize(query).into_iter().collect();
    let mut scores: HashMap<u32, f64> = HashMap::new();
    for term in &terms {
        let list = col.postings(term);
        if list.is_empty() {
            continue;
        }
        let df = list.len() as f64;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln().max(0.0);
        for &(id, tf) in list {
            let tf = tf as f64;
            let dl = col.doc_len[id as usize] as f64;
            *scores.entry(id).or_default() += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
        }
    }
    let mut hits: Vec<ValueHit> = scores
        .into_iter()
        .filter(|&(_, s)| s > 0.0)
        .map(|(id, score)| ValueHit { value: col.values[id as usize].clone(), score })
        .collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.value.cmp(&b.value)));
    hits.truncate(k);
    Ok(hits)
}
