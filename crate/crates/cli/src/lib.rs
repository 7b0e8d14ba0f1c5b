//! Commands behind the `schemafilter` binary.
//!
//! Artifact layout under `paths.artifacts`:
//!
//! ```text
//! graph/<db>.graph        FD graph container
//! graph/<db>.schema.json  schema after key merging (what the graph was built from)
//! graph/<db>.keys.json    merged-key report
//! index/<db>.index        value index container
//! weights/reranker.bin    reranker weights
//! weights/loss.csv        per-step training loss
//! reports/                eval and bench output
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place.

pub mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use schemafilter_core::encoder::{CachedProvider, EmbeddingProvider, HashProvider, ProviderError, RemoteClient, RemoteProvider};
use schemafilter_core::eval::{
    evaluate, latency_csv, samples_csv, summarize, threshold_grid, EvalExample, EvalReport, LatencyRow, LatencySample,
    Selection,
};
use schemafilter_core::graph::{
    build_fd_graph, infer_keys_heuristic, load_graph, merge_keys, parse_key_prediction, serialize_graph,
    serialize_key_prediction, KeyPrediction,
};
use schemafilter_core::pipeline::{
    featurize_examples, train_examples, DatabaseState, DatasetRecord, Engine, FilterRequest, FilterResponse,
    PipelineError,
};
use schemafilter_core::reranker::{load_params, serialize_params, train, RerankerParams};
use schemafilter_core::schema::{load_schemas, parse_schema, serialize_schema, DatabaseSchema, SchemaFormat};
use schemafilter_core::values::{build_value_index, load_index, read_value_dump, serialize_index, Bm25Params};
use serde::Serialize;
use thiserror::Error;

pub use config::{EngineConfig, ProviderKind};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Provider(String),
    /// Some databases failed; the rest were processed.
    #[error("{} of {total} databases failed: {}", failed.len(), failed.iter().map(|f| format!("{} ({})", f.0, f.1)).collect::<Vec<_>>().join("; "))]
    Partial { total: usize, failed: Vec<(String, CliError)> },
}

impl CliError {
    /// 0 ok, 1 usage, 2 data, 3 provider. A partial failure takes the worst code among its causes.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Provider(_) => 3,
            CliError::Partial { failed, .. } => failed.iter().map(|(_, e)| e.exit_code()).max().unwrap_or(2),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Provider(p) => CliError::Provider(p.to_string()),
            PipelineError::Selection(s) => CliError::Usage(s.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        CliError::Provider(e.to_string())
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let fail = |e: std::io::Error| CliError::Data(format!("writing {}: {e}", path.display()));
    std::fs::create_dir_all(dir).map_err(fail)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

fn to_json(value: &impl Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("reports always serialize");
    s.push('\n');
    s.into_bytes()
}

/// Database ids become file names, so they may not contain separators.
fn check_db_id(db: &str) -> Result<(), CliError> {
    if db.is_empty() || db.contains(['/', '\\']) || db == "." || db == ".." {
        return Err(CliError::Data(format!("database id `{db}` cannot be used as a file name")));
    }
    Ok(())
}

/// Every schema named by `paths.schemas`, keyed by db id.
pub fn load_source_schemas(config: &EngineConfig) -> Result<BTreeMap<String, DatabaseSchema>, CliError> {
    let root = &config.paths.schemas;
    let format = match config.paths.schema_format {
        config::SchemaFormatName::Native => SchemaFormat::Native,
        config::SchemaFormatName::Spider => SchemaFormat::SpiderManifest,
    };
    let files: Vec<PathBuf> = if root.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(root)
            .map_err(|e| CliError::Data(format!("listing {}: {e}", root.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        files
    } else {
        vec![root.clone()]
    };
    let mut out = BTreeMap::new();
    for f in files {
        for schema in load_schemas(&f, format).map_err(data)? {
            let id = schema.db_id.clone();
            if out.insert(id.clone(), schema).is_some() {
                return Err(CliError::Data(format!("database `{id}` is defined twice (last in {})", f.display())));
            }
        }
    }
    Ok(out)
}

/// Resolves the `--db` list. With `all`, every known database in id order.
pub fn select_databases(
    schemas: &BTreeMap<String, DatabaseSchema>,
    requested: &[String],
    all: bool,
) -> Vec<String> {
    if all {
        return schemas.keys().cloned().collect();
    }
    let mut seen = BTreeSet::new();
    requested.iter().filter(|d| seen.insert(d.as_str())).cloned().collect()
}

pub fn build_provider(config: &EngineConfig) -> Result<Arc<dyn EmbeddingProvider>, CliError> {
    Ok(match config.provider.kind {
        ProviderKind::Hash => Arc::new(HashProvider::new(config.provider.dim)),
        ProviderKind::Remote => {
            let remote = RemoteProvider::new(config.provider.remote_config())?;
            let cache = config.paths.artifacts.join("cache");
            Arc::new(CachedProvider::new(remote, &cache).map_err(|e| {
                CliError::Data(format!("creating embedding cache {}: {e}", cache.display()))
            })?)
        }
    })
}

/// Per-database outcome of `enrich`, serialized as `graph/<db>.keys.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyReport {
    pub db_id: String,
    /// `declared`, `file`, `heuristic` or `remote`.
    pub key_source: String,
    pub predicted: serde_json::Value,
    pub conflicts: Vec<KeyConflictRecord>,
    pub added_primary_keys: Vec<String>,
    pub added_foreign_keys: Vec<String>,
    pub nodes: usize,
    pub edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyConflictRecord {
    pub table: String,
    pub declared: Vec<String>,
    pub predicted: Vec<String>,
}

fn enrich_one(config: &EngineConfig, schema: &DatabaseSchema, remote: Option<&RemoteClient>) -> Result<KeyReport, CliError> {
    check_db_id(&schema.db_id)?;
    schema.validate().map_err(data)?;
    let file = config.paths.key_predictions.as_ref().map(|d| d.join(format!("{}.json", schema.db_id)));
    let (source, prediction) = match file.filter(|f| f.is_file()) {
        Some(f) => {
            let text = std::fs::read_to_string(&f).map_err(|e| CliError::Data(format!("{}: {e}", f.display())))?;
            ("file", parse_key_prediction(&text).map_err(|e| CliError::Data(format!("{}: {e}", f.display())))?)
        }
        None => match (config.enrich.keys, remote) {
            (config::KeySource::Remote, Some(client)) => ("remote", client.predict_keys(schema)?),
            (config::KeySource::Heuristic, _) => ("heuristic", infer_keys_heuristic(schema)),
            _ => ("declared", KeyPrediction::default()),
        },
    };
    let merged = merge_keys(schema, &prediction).map_err(data)?;
    let added_primary_keys = merged
        .schema
        .tables
        .iter()
        .zip(&schema.tables)
        .filter(|(m, s)| s.primary_key.is_empty() && !m.primary_key.is_empty())
        .map(|(m, _)| format!("{}({})", m.name, m.primary_key.join(", ")))
        .collect();
    let added_foreign_keys = merged.schema.foreign_keys[schema.foreign_keys.len()..]
        .iter()
        .map(|fk| format!("{} -> {}", fk.source, fk.target))
        .collect();
    let graph = build_fd_graph(&merged.schema);
    let dir = config.graph_dir();
    write_atomic(&dir.join(format!("{}.graph", schema.db_id)), &serialize_graph(&graph))?;
    write_atomic(&dir.join(format!("{}.schema.json", schema.db_id)), serialize_schema(&merged.schema).as_bytes())?;
    let report = KeyReport {
        db_id: schema.db_id.clone(),
        key_source: source.into(),
        predicted: serde_json::from_str(&serialize_key_prediction(&prediction)).expect("round-trips through JSON"),
        conflicts: merged
            .conflicts
            .iter()
            .map(|c| KeyConflictRecord { table: c.table.clone(), declared: c.declared.clone(), predicted: c.predicted.clone() })
            .collect(),
        added_primary_keys,
        added_foreign_keys,
        nodes: graph.node_count(),
        edges: graph.edge_count(),
    };
    write_atomic(&dir.join(format!("{}.keys.json", schema.db_id)), &to_json(&report))?;
    Ok(report)
}

/// Runs `f` for each database in parallel, keeps input order, and isolates failures.
fn per_database<T: Send>(
    dbs: &[String],
    f: impl Fn(&str) -> Result<T, CliError> + Sync,
) -> Result<Vec<T>, CliError> {
    let results: Vec<Result<T, CliError>> = dbs.par_iter().map(|d| f(d)).collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (db, r) in dbs.iter().zip(results) {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                log::error!("{db}: {e}");
                failed.push((db.clone(), e));
            }
        }
    }
    if failed.is_empty() {
        Ok(ok)
    } else {
        Err(CliError::Partial { total: dbs.len(), failed })
    }
}

fn source_schema<'a>(schemas: &'a BTreeMap<String, DatabaseSchema>, db: &str) -> Result<&'a DatabaseSchema, CliError> {
    schemas.get(db).ok_or_else(|| CliError::Data(format!("unknown database `{db}`")))
}

/// Builds the FD graph of each database, merging predicted keys. An empty list does nothing.
pub fn cmd_enrich(config: &EngineConfig, dbs: &[String]) -> Result<Vec<KeyReport>, CliError> {
    if dbs.is_empty() {
        return Ok(Vec::new());
    }
    let schemas = load_source_schemas(config)?;
    let remote = match config.enrich.keys {
        config::KeySource::Remote => Some(RemoteClient::new(config.provider.remote_config())?),
        _ => None,
    };
    per_database(dbs, |db| enrich_one(config, source_schema(&schemas, db)?, remote.as_ref()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexSummary {
    pub db_id: String,
    pub rows: usize,
    pub columns_with_values: usize,
}

/// Indexes `<value_dumps>/<db>.tsv` for each database. An empty list does nothing.
pub fn cmd_index(config: &EngineConfig, dbs: &[String]) -> Result<Vec<IndexSummary>, CliError> {
    if dbs.is_empty() {
        return Ok(Vec::new());
    }
    let dumps = config
        .paths
        .value_dumps
        .clone()
        .ok_or_else(|| CliError::Usage("paths.value_dumps is not set".into()))?;
    let schemas = load_source_schemas(config)?;
    per_database(dbs, |db| {
        check_db_id(db)?;
        let schema = source_schema(&schemas, db)?;
        let rows = read_value_dump(&dumps.join(format!("{db}.tsv"))).map_err(data)?;
        let n = rows.len();
        let index = build_value_index(schema, rows, Bm25Params::default()).map_err(data)?;
        let columns_with_values = index.columns().filter(|(_, p)| p.doc_count() > 0).count();
        write_atomic(&config.index_dir().join(format!("{db}.index")), &serialize_index(&index))?;
        Ok(IndexSummary { db_id: db.to_string(), rows: n, columns_with_values })
    })
}

/// Loads a database's artifacts, falling back to the declared keys when `enrich` has not run.
pub fn load_database(config: &EngineConfig, db: &str, sources: Option<&BTreeMap<String, DatabaseSchema>>) -> Result<DatabaseState, CliError> {
    check_db_id(db)?;
    let graph_dir = config.graph_dir();
    let merged = graph_dir.join(format!("{db}.schema.json"));
    let schema = if merged.is_file() {
        let text = std::fs::read_to_string(&merged).map_err(|e| CliError::Data(format!("{}: {e}", merged.display())))?;
        parse_schema(&text, &merged.display().to_string()).map_err(data)?
    } else {
        match sources {
            Some(s) => source_schema(s, db)?.clone(),
            None => source_schema(&load_source_schemas(config)?, db)?.clone(),
        }
    };
    let graph_path = graph_dir.join(format!("{db}.graph"));
    let graph = if graph_path.is_file() {
        load_graph(&graph_path).map_err(data)?
    } else {
        log::warn!("{db}: no graph artifact; using declared keys only (run `enrich`)");
        build_fd_graph(&schema)
    };
    let index_path = config.index_dir().join(format!("{db}.index"));
    let index = if index_path.is_file() { Some(load_index(&index_path).map_err(data)?) } else { None };
    Ok(DatabaseState::new(schema, graph, index)?)
}

pub fn load_weights(config: &EngineConfig) -> Result<RerankerParams<f32>, CliError> {
    let path = config.weights_path();
    if !path.is_file() {
        return Err(CliError::Data(format!("no weights at {} (run `train`)", path.display())));
    }
    load_params(&path).map_err(data)
}

/// An engine over the given databases with the trained weights.
pub fn build_engine(config: &EngineConfig, dbs: &[String]) -> Result<Engine, CliError> {
    let params = load_weights(config)?;
    let provider = build_provider(config)?;
    let needs_sources = dbs.iter().any(|d| !config.graph_dir().join(format!("{d}.schema.json")).is_file());
    let sources = if needs_sources { Some(load_source_schemas(config)?) } else { None };
    let states: Vec<DatabaseState> =
        dbs.par_iter().map(|d| load_database(config, d, sources.as_ref())).collect::<Result<_, _>>()?;
    let mut engine = Engine::new(provider, params, config.provider.sample_values)?;
    for s in states {
        engine.add_database(s);
    }
    Ok(engine)
}

/// Reads a JSON-lines question file. Blank lines are skipped.
pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

fn dataset_databases(config: &EngineConfig, records: &[DatasetRecord]) -> Result<BTreeMap<String, DatabaseState>, CliError> {
    let ids: Vec<String> = records.iter().map(|r| r.db_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let needs_sources = ids.iter().any(|d| !config.graph_dir().join(format!("{d}.schema.json")).is_file());
    let sources = if needs_sources { Some(load_source_schemas(config)?) } else { None };
    ids.par_iter()
        .map(|d| Ok((d.clone(), load_database(config, d, sources.as_ref())?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub examples: usize,
    pub steps: usize,
    pub epoch_loss: Vec<f64>,
    pub weights: PathBuf,
}

/// Trains the reranker on a JSON-lines dataset and writes the weights and loss trace.
pub fn cmd_train(config: &EngineConfig, dataset: &Path) -> Result<TrainSummary, CliError> {
    let records = read_dataset(dataset)?;
    let dbs = dataset_databases(config, &records)?;
    let labeled = records
        .iter()
        .enumerate()
        .map(|(i, r)| r.label(&dbs[&r.db_id].schema).map_err(|e| CliError::Data(format!("{}:{}: {e}", dataset.display(), i + 1))))
        .collect::<Result<Vec<_>, _>>()?;
    let provider = build_provider(config)?;
    let data = featurize_examples(provider.as_ref(), &dbs, &labeled, config.provider.sample_values)?;
    let tc = config.reranker.training_config();
    let init = tc.init_params::<f32>(provider.dim());
    let (params, report) = train(init, &train_examples(&dbs, &data), &tc).map_err(data_err)?;
    write_atomic(&config.weights_path(), &serialize_params(&params))?;
    write_atomic(&config.weights_dir().join("loss.csv"), report.to_csv().as_bytes())?;
    Ok(TrainSummary {
        examples: data.len(),
        steps: report.steps.len(),
        epoch_loss: report.epoch_loss,
        weights: config.weights_path(),
    })
}

fn data_err(e: schemafilter_core::reranker::RerankerError) -> CliError {
    CliError::Data(e.to_string())
}

/// Command-line selection overrides; `None` keeps the config value.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SelectionOverride {
    pub mode: Option<Selection>,
    pub no_steiner: bool,
}

impl SelectionOverride {
    pub fn resolve(&self, config: &EngineConfig) -> Result<(Selection, bool), CliError> {
        let mode = self.mode.unwrap_or(config.selection.mode);
        mode.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok((mode, config.selection.steiner && !self.no_steiner))
    }
}

/// Filters one question against one database.
pub fn cmd_filter(config: &EngineConfig, db: &str, question: &str, selection: SelectionOverride) -> Result<FilterResponse, CliError> {
    let (mode, steiner) = selection.resolve(config)?;
    let engine = build_engine(config, &[db.to_string()])?;
    let request = FilterRequest { question: question.into(), db_id: db.into(), selection: mode, steiner_enabled: steiner };
    Ok(engine.filter(&request)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalOutputs {
    pub report: PathBuf,
    pub threshold_curve: PathBuf,
    pub top_k_curve: PathBuf,
}

/// Scores every question of an evaluation set and writes the report and curves.
pub fn cmd_eval(config: &EngineConfig, dataset: &Path) -> Result<(EvalReport, EvalOutputs), CliError> {
    let records = read_dataset(dataset)?;
    if records.is_empty() {
        return Err(CliError::Data(format!("{} holds no questions", dataset.display())));
    }
    let ids: Vec<String> = records.iter().map(|r| r.db_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let engine = build_engine(config, &ids)?;
    let scored: Vec<(Vec<f64>, Vec<bool>)> = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let db = engine.database(&r.db_id)?;
            let ex = r.label(&db.schema).map_err(|e| CliError::Data(format!("{}:{}: {e}", dataset.display(), i + 1)))?;
            let labels = db.graph.nodes().iter().map(|c| ex.is_positive(c)).collect();
            let (scores, _) = engine.score(&r.db_id, &r.question)?;
            Ok((scores, labels))
        })
        .collect::<Result<_, CliError>>()?;
    let examples: Vec<EvalExample<'_>> = records
        .iter()
        .zip(scored)
        .enumerate()
        .map(|(i, (r, (scores, labels)))| EvalExample {
            id: format!("{}#{i}", r.db_id),
            scores,
            labels,
            graph: &engine.database(&r.db_id).expect("loaded above").graph,
        })
        .collect();
    let thresholds = threshold_grid(&examples, config.threshold_points);
    let report = evaluate(&examples, config.recall_floor, &thresholds).map_err(data)?;
    let dir = config.reports_dir();
    let outputs = EvalOutputs {
        report: dir.join("eval.json"),
        threshold_curve: dir.join("threshold_curve.csv"),
        top_k_curve: dir.join("top_k_curve.csv"),
    };
    write_atomic(&outputs.report, &to_json(&report))?;
    write_atomic(&outputs.threshold_curve, report.curves.threshold.to_csv("threshold").as_bytes())?;
    write_atomic(&outputs.top_k_curve, report.curves.top_k.to_csv("k").as_bytes())?;
    Ok((report, outputs))
}

/// Times the full filter for each question, one at a time so questions do not
/// compete for cores; each question's own stages still use the `--jobs` pool.
pub fn cmd_bench(config: &EngineConfig, dbs: &[String], questions: &Path) -> Result<Vec<LatencyRow>, CliError> {
    let records = read_dataset(questions)?;
    let keep: BTreeSet<&str> = dbs.iter().map(String::as_str).collect();
    let records: Vec<&DatasetRecord> = records.iter().filter(|r| keep.is_empty() || keep.contains(r.db_id.as_str())).collect();
    let ids: Vec<String> = records.iter().map(|r| r.db_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let engine = build_engine(config, &ids)?;
    let (mode, steiner) = SelectionOverride::default().resolve(config)?;
    let mut samples = Vec::with_capacity(records.len());
    for r in records {
        let request = FilterRequest { question: r.question.clone(), db_id: r.db_id.clone(), selection: mode, steiner_enabled: steiner };
        let resp = engine.filter(&request)?;
        let db = engine.database(&r.db_id)?;
        samples.push(LatencySample {
            db_id: r.db_id.clone(),
            columns: db.column_count(),
            tables: db.table_count(),
            question: r.question.clone(),
            timings: resp.timings,
        });
    }
    let rows = summarize(&samples);
    let dir = config.reports_dir();
    write_atomic(&dir.join("latency.csv"), latency_csv(&rows).as_bytes())?;
    write_atomic(&dir.join("latency_samples.csv"), samples_csv(&samples).as_bytes())?;
    Ok(rows)
}

/// Runs `f` inside a pool of `jobs` threads (all cores when `None`).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
