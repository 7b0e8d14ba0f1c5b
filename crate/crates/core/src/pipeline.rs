//! Question → sub-schema: context assembly, embedding, graph reranking, selection and closure.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{assemble_context, embed_checked, EmbeddingProvider, EncoderError, ProviderError, SampleSource};
use crate::eval::{EvalError, Selection, StageTimings};
use crate::graph::{build_fd_graph, FdGraph};
use crate::reranker::{score_nodes, RelGraph, RerankerError, RerankerParams, TrainExample};
use crate::schema::{build_labeled_example, labeled_from_positives, ColumnRef, DatabaseSchema, LabeledExample, SchemaError};
use crate::steiner::{close_terminals, ColumnRole, TerminalSet};
use crate::values::InvertedIndex;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unknown database `{0}`")]
    UnknownDatabase(String),
    #[error("graph for `{db}` does not match its schema: {message}")]
    GraphMismatch { db: String, message: String },
    #[error("provider emits {provider}-dim vectors but the reranker expects {reranker}")]
    InputDim { provider: usize, reranker: usize },
    #[error(transparent)]
    Selection(#[from] EvalError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Reranker(#[from] RerankerError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// Everything loaded for one database.
#[derive(Debug, Clone)]
pub struct DatabaseState {
    pub schema: DatabaseSchema,
    pub graph: FdGraph,
    pub rel: RelGraph,
    pub index: Option<InvertedIndex>,
}

impl DatabaseState {
    /// Every graph node must name a schema column.
    pub fn new(schema: DatabaseSchema, graph: FdGraph, index: Option<InvertedIndex>) -> Result<Self, PipelineError> {
        if let Some(bad) = graph.nodes().iter().find(|c| schema.canonical(c).is_none()) {
            return Err(PipelineError::GraphMismatch { db: schema.db_id.clone(), message: format!("no column {bad}") });
        }
        let rel = RelGraph::new(&graph);
        Ok(Self { schema, graph, rel, index })
    }

    /// Graph built straight from the declared keys, no value index.
    pub fn from_schema(schema: DatabaseSchema) -> Self {
        let graph = build_fd_graph(&schema);
        let rel = RelGraph::new(&graph);
        Self { schema, graph, rel, index: None }
    }

    pub fn column_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn table_count(&self) -> usize {
        self.schema.tables.len()
    }
}

/// Embeds every column of `db` for `question`, rows in graph node order.
pub fn featurize(
    provider: &dyn EmbeddingProvider,
    db: &DatabaseState,
    question: &str,
    sample_k: usize,
) -> Result<(Array2<f32>, StageTimings), PipelineError> {
    let mut timings = StageTimings::default();
    let start = Instant::now();
    let source = match &db.index {
        Some(index) => SampleSource::Retrieved(index),
        None => SampleSource::FallbackOnly,
    };
    let contexts = db
        .graph
        .nodes()
        .par_iter()
        .map(|c| assemble_context(&db.schema, c, question, source, sample_k))
        .collect::<Result<Vec<_>, _>>()?;
    timings.context_ms = ms(start);

    let start = Instant::now();
    let items: Vec<(&str, &_)> = contexts.iter().map(|c| (question, c)).collect();
    let dim = provider.dim();
    let vectors = embed_checked(provider, &items)?;
    let mut x = Array2::zeros((vectors.len(), dim));
    for (mut row, v) in x.rows_mut().into_iter().zip(&vectors) {
        row.assign(&ndarray::ArrayView1::from(v.as_slice()));
    }
    timings.embed_ms = ms(start);
    Ok((x, timings))
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRequest {
    pub question: String,
    pub db_id: String,
    pub selection: Selection,
    pub steiner_enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredColumn {
    pub column: ColumnRef,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectedColumn {
    pub column: ColumnRef,
    pub score: f64,
    pub role: ColumnRole,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterResponse {
    pub db_id: String,
    pub question: String,
    /// Every column in graph order.
    pub scores: Vec<ScoredColumn>,
    /// C*, in graph order.
    pub selected: Vec<SelectedColumn>,
    /// Tables owning at least one selected column, in schema order.
    pub tables: Vec<String>,
    /// Foreign keys with both endpoints selected, as `source -> target`.
    pub foreign_keys: Vec<String>,
    pub timings: StageTimings,
}

impl FilterResponse {
    pub fn selected_columns(&self) -> BTreeSet<ColumnRef> {
        self.selected.iter().map(|c| c.column.clone()).collect()
    }
}

/// Shared, immutable state for answering filter requests.
pub struct Engine {
    provider: Arc<dyn EmbeddingProvider>,
    params: RerankerParams<f32>,
    sample_k: usize,
    databases: BTreeMap<String, DatabaseState>,
}

impl Engine {
    pub fn new(provider: Arc<dyn EmbeddingProvider>, params: RerankerParams<f32>, sample_k: usize) -> Result<Self, PipelineError> {
        if provider.dim() != params.shape.input_dim {
            return Err(PipelineError::InputDim { provider: provider.dim(), reranker: params.shape.input_dim });
        }
        Ok(Self { provider, params, sample_k, databases: BTreeMap::new() })
    }

    pub fn add_database(&mut self, db: DatabaseState) {
        self.databases.insert(db.schema.db_id.clone(), db);
    }

    pub fn database(&self, db_id: &str) -> Result<&DatabaseState, PipelineError> {
        self.databases.get(db_id).ok_or_else(|| PipelineError::UnknownDatabase(db_id.to_string()))
    }

    pub fn databases(&self) -> impl Iterator<Item = &DatabaseState> {
        self.databases.values()
    }

    pub fn params(&self) -> &RerankerParams<f32> {
        &self.params
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider.as_ref()
    }

    /// Relevance score per column (graph order).
    pub fn score(&self, db_id: &str, question: &str) -> Result<(Vec<f64>, StageTimings), PipelineError> {
        let db = self.database(db_id)?;
        let (x, mut timings) = featurize(self.provider.as_ref(), db, question, self.sample_k)?;
        let start = Instant::now();
        let scores = score_nodes(&db.rel, x.view(), &self.params)?;
        timings.forward_ms = ms(start);
        Ok((scores.iter().map(|&s| s as f64).collect(), timings))
    }

    pub fn filter(&self, request: &FilterRequest) -> Result<FilterResponse, PipelineError> {
        request.selection.validate()?;
        let db = self.database(&request.db_id)?;
        let (scores, mut timings) = self.score(&request.db_id, &request.question)?;

        let start = Instant::now();
        let picked = request.selection.apply(&scores);
        let mut roles: Vec<Option<ColumnRole>> = vec![None; scores.len()];
        if request.steiner_enabled && !picked.is_empty() {
            let terminals = TerminalSet::new(picked, scores.len()).expect("selection yields distinct nodes");
            for (v, role) in close_terminals(&db.graph, &terminals).columns {
                roles[v] = Some(role);
            }
        } else {
            for v in picked {
                roles[v] = Some(ColumnRole::Terminal);
            }
        }
        timings.steiner_ms = ms(start);

        let nodes = db.graph.nodes();
        let selected: Vec<SelectedColumn> = roles
            .iter()
            .enumerate()
            .filter_map(|(v, r)| r.map(|role| SelectedColumn { column: nodes[v].clone(), score: scores[v], role }))
            .collect();
        let chosen: BTreeSet<&ColumnRef> = selected.iter().map(|c| &c.column).collect();
        let tables = db
            .schema
            .tables
            .iter()
            .filter(|t| chosen.iter().any(|c| crate::schema::fold(&c.table) == crate::schema::fold(&t.name)))
            .map(|t| t.name.clone())
            .collect();
        let foreign_keys = db
            .schema
            .foreign_keys
            .iter()
            .filter(|fk| chosen.contains(&fk.source) && chosen.contains(&fk.target))
            .map(|fk| format!("{} -> {}", fk.source, fk.target))
            .collect();
        Ok(FilterResponse {
            db_id: request.db_id.clone(),
            question: request.question.clone(),
            scores: nodes.iter().zip(&scores).map(|(c, &s)| ScoredColumn { column: c.clone(), score: s }).collect(),
            selected,
            tables,
            foreign_keys,
            timings,
        })
    }
}

/// One line of a question file: gold SQL and/or explicit gold columns (`table.column`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub db_id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gold_sql: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gold_columns: Vec<String>,
}

impl DatasetRecord {
    /// Columns are preferred over SQL when both are present.
    pub fn label(&self, schema: &DatabaseSchema) -> Result<LabeledExample, SchemaError> {
        if !self.gold_columns.is_empty() {
            let cols = self
                .gold_columns
                .iter()
                .map(|c| ColumnRef::parse(c).ok_or_else(|| SchemaError::Invalid(format!("gold column `{c}` is not `table.column`"))))
                .collect::<Result<Vec<_>, _>>()?;
            return labeled_from_positives(&self.question, cols, schema);
        }
        let sqls: Vec<&str> = self.gold_sql.iter().map(String::as_str).collect();
        build_labeled_example(&self.question, &sqls, schema)
    }
}

/// Embedded inputs plus node-index labels for one training/eval question.
#[derive(Debug, Clone)]
pub struct Featurized {
    pub db_id: String,
    pub question: String,
    pub inputs: Array2<f32>,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

impl Featurized {
    pub fn labels(&self) -> Vec<bool> {
        let mut l = vec![false; self.inputs.nrows()];
        for &p in &self.positives {
            l[p] = true;
        }
        l
    }
}

/// Featurizes labeled questions against their databases, preserving input order.
pub fn featurize_examples(
    provider: &dyn EmbeddingProvider,
    databases: &BTreeMap<String, DatabaseState>,
    examples: &[LabeledExample],
    sample_k: usize,
) -> Result<Vec<Featurized>, PipelineError> {
    examples
        .iter()
        .map(|ex| {
            let db = databases.get(&ex.db_id).ok_or_else(|| PipelineError::UnknownDatabase(ex.db_id.clone()))?;
            let (inputs, _) = featurize(provider, db, &ex.question, sample_k)?;
            let (mut positives, mut negatives) = (Vec::new(), Vec::new());
            for (v, c) in db.graph.nodes().iter().enumerate() {
                if ex.is_positive(c) { positives.push(v) } else { negatives.push(v) }
            }
            Ok(Featurized { db_id: ex.db_id.clone(), question: ex.question.clone(), inputs, positives, negatives })
        })
        .collect()
}

/// Borrowed training views over featurized questions.
pub fn train_examples<'a>(
    databases: &'a BTreeMap<String, DatabaseState>,
    data: &'a [Featurized],
) -> Vec<TrainExample<'a, f32>> {
    data.iter()
        .map(|f| TrainExample {
            graph: &databases[&f.db_id].rel,
            inputs: f.inputs.view(),
            positives: f.positives.clone(),
            negatives: f.negatives.clone(),
        })
        .collect()
}
