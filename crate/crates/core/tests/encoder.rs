use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schemafilter_core::encoder::{
    assemble_context, embed, fit_context, hash_embed, hash_embed_query, render_context, render_prompt,
    CachedProvider, ColumnContext, EmbeddingProvider, HashProvider, PromptTemplate, ProviderError, RemoteConfig,
    RemoteProvider, SampleSource,
};
use schemafilter_core::schema::{load_schema, ColumnDef, ColumnRef, DatabaseSchema, SchemaFormat, TableDef};
use schemafilter_core::values::{build_value_index, read_value_dump, Bm25Params, InvertedIndex};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn cr(s: &str) -> ColumnRef {
    ColumnRef::parse(s).unwrap()
}

const QUESTION: &str = "Count the number of courses offered in the Computer Science department";

fn university() -> (DatabaseSchema, InvertedIndex) {
    let schema = load_schema(&fixture("university.json"), SchemaFormat::Native).unwrap();
    let rows = read_value_dump(&fixture("university_values.tsv")).unwrap();
    let index = build_value_index(&schema, rows, Bm25Params::default()).unwrap();
    (schema, index)
}

fn cos(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn example_context_picks_query_value() {
    let (schema, index) = university();
    let ctx = assemble_context(&schema, &cr("Departments.name"), QUESTION, SampleSource::Retrieved(&index), 2).unwrap();
    assert_eq!(ctx.sample_values, vec!["Computer Science".to_string()]);
    assert_eq!(ctx.table_name, "Departments");
    assert_eq!(ctx.column_description, "Department name.");
    // Purity.
    let again = assemble_context(&schema, &cr("Departments.name"), QUESTION, SampleSource::Retrieved(&index), 2).unwrap();
    assert_eq!(ctx, again);
}

#[test]
fn fallback_uses_first_stored_sample() {
    let (schema, index) = university();
    let ctx = assemble_context(&schema, &cr("Students.enrollment_year"), QUESTION, SampleSource::Retrieved(&index), 2)
        .unwrap();
    assert_eq!(ctx.sample_values, vec!["2021".to_string()]);
    let provided = assemble_context(&schema, &cr("Departments.name"), "", SampleSource::Provided, 2).unwrap();
    assert_eq!(provided.sample_values, vec!["Computer Science".to_string(), "History".to_string()]);
}

#[test]
fn bare_column_has_empty_fields() {
    let mut s = DatabaseSchema::new("bare");
    let mut t = TableDef::new("t");
    t.columns.push(ColumnDef::new("c", ""));
    s.tables.push(t);
    let ctx = assemble_context(&s, &cr("t.c"), "q", SampleSource::FallbackOnly, 2).unwrap();
    assert_eq!(
        ctx,
        ColumnContext { table_name: "t".into(), column_name: "c".into(), ..ColumnContext::default() }
    );
    assert!(assemble_context(&s, &cr("t.x"), "q", SampleSource::FallbackOnly, 2).is_err());
}

#[test]
fn prompts_match_golden_files() {
    let (schema, index) = university();
    let cases = [
        (QUESTION, "Departments.name", SampleSource::Retrieved(&index), "prompt_1.txt"),
        ("Which students got an A grade?", "Enrollments.grade", SampleSource::FallbackOnly, "prompt_2.txt"),
        ("", "Instructors.iid", SampleSource::FallbackOnly, "prompt_3.txt"),
    ];
    for (q, col, src, golden) in cases {
        let ctx = assemble_context(&schema, &cr(col), q, src, 2).unwrap();
        let expected = std::fs::read(fixture("golden").join(golden)).unwrap();
        assert_eq!(render_prompt(q, &ctx).as_bytes(), expected.as_slice(), "{golden}");
    }
}

#[test]
fn prompt_has_query_line_and_literal_think_suffix() {
    let ctx = ColumnContext { table_name: "t".into(), column_name: "c".into(), ..Default::default() };
    let p = render_prompt(QUESTION, &ctx);
    assert!(p.contains(&format!("<Query>: {QUESTION}\n")));
    assert!(p.ends_with("<|im_start|>assistant\n<think>\\n\\n</think>\\n\\n"));
    let empty = render_prompt("", &ctx);
    assert!(empty.contains("\n<Query>: \n<Document>: Table name: t\n"));
}

#[test]
fn substitution_is_single_pass() {
    let ctx = ColumnContext { table_name: "{q}".into(), column_name: "c".into(), ..Default::default() };
    let p = render_prompt("mention {context(c)} here", &ctx);
    assert!(p.contains("<Query>: mention {context(c)} here\n"));
    assert!(p.contains("<Document>: Table name: {q}\n"));
}

#[test]
fn template_loads_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.txt");
    std::fs::write(&path, "Q={q};C={context(c)}").unwrap();
    let t = PromptTemplate::load(&path).unwrap();
    let ctx = ColumnContext { table_name: "t".into(), column_name: "c".into(), ..Default::default() };
    assert_eq!(t.render("x", &ctx), format!("Q=x;C={}", render_context(&ctx)));
    std::fs::write(&path, "no slots").unwrap();
    assert!(PromptTemplate::load(&path).is_err());
}

#[test]
fn rendering_is_injective_on_fixture_corpus() {
    let (schema, index) = university();
    let queries = [QUESTION, "How many students?", "", "List instructor names"];
    let mut seen = HashSet::new();
    for q in queries {
        for col in schema.column_refs() {
            let ctx = assemble_context(&schema, &col, q, SampleSource::Retrieved(&index), 2).unwrap();
            assert!(seen.insert(render_prompt(q, &ctx)), "collision for {col} / {q}");
        }
    }
}

#[test]
fn fit_context_drops_samples_then_descriptions() {
    let ctx = ColumnContext {
        table_name: "t".into(),
        column_name: "c".into(),
        table_description: "one two three".into(),
        column_description: "four five".into(),
        sample_values: vec!["a".into(), "b".into()],
        value_description: "six seven".into(),
        ..Default::default()
    };
    let chars = |c: &ColumnContext| render_context(c).len();
    let full = chars(&ctx);
    let fitted = fit_context(&ctx, full - 1, chars);
    assert_eq!(fitted.sample_values, vec!["a".to_string()]);
    // Dropping both samples saves 7 bytes, so 8 forces one word off the value description.
    let fitted = fit_context(&ctx, full - 8, chars);
    assert!(fitted.sample_values.is_empty());
    assert_eq!(fitted.value_description, "six");
    assert_eq!(fitted.table_description, ctx.table_description);
    assert_eq!(fit_context(&ctx, full, chars), ctx);
}

fn random_words(rng: &mut ChaCha8Rng, prefix: &str, n: usize) -> String {
    (0..n).map(|_| format!("{prefix}{}", rng.random_range(0..1_000_000u32))).collect::<Vec<_>>().join(" ")
}

fn random_context(rng: &mut ChaCha8Rng, prefix: &str) -> ColumnContext {
    ColumnContext {
        table_name: random_words(rng, prefix, 1),
        column_name: random_words(rng, prefix, 2),
        table_description: random_words(rng, prefix, 6),
        column_description: random_words(rng, prefix, 5),
        data_type: random_words(rng, prefix, 1),
        sample_values: vec![random_words(rng, prefix, 2)],
        missingness_flag: false,
        value_description: random_words(rng, prefix, 3),
    }
}

#[test]
fn hash_vectors_are_unit_and_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let provider = HashProvider::new(64);
    for _ in 0..50 {
        let ctx = random_context(&mut rng, "w");
        let q = random_words(&mut rng, "w", 5);
        let v = embed(&provider, &q, &ctx).unwrap();
        assert_eq!(v.len(), 64);
        let norm: f64 = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert_eq!(v, embed(&provider, &q, &ctx).unwrap());
        assert!((cos(&v, &v) - 1.0).abs() < 1e-9);
    }
}

#[test]
fn empty_input_maps_to_first_basis_vector() {
    let v = hash_embed("", &ColumnContext::default(), 16);
    let mut e0 = vec![0.0f32; 16];
    e0[0] = 1.0;
    assert_eq!(v, e0);
    assert_eq!(hash_embed_query("", 16), e0);
}

#[test]
fn disjoint_tokens_are_nearly_orthogonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (qa, ca) = (random_words(&mut rng, "a", 8), random_context(&mut rng, "a"));
        let (qb, cb) = (random_words(&mut rng, "b", 8), random_context(&mut rng, "b"));
        let c = cos(&hash_embed(&qa, &ca, 4096), &hash_embed(&qb, &cb, 4096)).abs();
        worst = worst.max(c);
    }
    assert!(worst < 0.1, "worst |cos| = {worst}");
}

#[test]
fn one_changed_sample_value_changes_the_vector() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = random_context(&mut rng, "w");
    let q = random_words(&mut rng, "w", 6);
    let mut collisions = 0;
    for _ in 0..100_000 {
        let mut a = base.clone();
        let mut b = base.clone();
        a.sample_values = vec![format!("v{}", rng.random::<u64>())];
        b.sample_values = vec![format!("v{}", rng.random::<u64>())];
        if a.sample_values == b.sample_values {
            continue;
        }
        if hash_embed(&q, &a, 256) == hash_embed(&q, &b, 256) {
            collisions += 1;
        }
    }
    assert_eq!(collisions, 0);
}

#[test]
fn shared_tokens_raise_similarity_to_the_query() {
    let q = "average salary of engineers";
    let qv = hash_embed_query(q, 1024);
    let related = ColumnContext {
        table_name: "staff".into(),
        column_name: "salary".into(),
        column_description: "yearly salary in dollars".into(),
        ..Default::default()
    };
    let unrelated = ColumnContext {
        table_name: "staff".into(),
        column_name: "badge".into(),
        column_description: "door badge number".into(),
        ..Default::default()
    };
    assert!(cos(&qv, &hash_embed(q, &related, 1024)) > cos(&qv, &hash_embed(q, &unrelated, 1024)));
}

#[test]
fn batch_equals_single_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let provider = HashProvider::new(32);
    let ctxs: Vec<ColumnContext> = (0..10).map(|_| random_context(&mut rng, "w")).collect();
    let items: Vec<(&str, &ColumnContext)> = ctxs.iter().map(|c| ("some query", c)).collect();
    let batch = provider.embed_batch(&items).unwrap();
    for (v, (q, c)) in batch.iter().zip(&items) {
        assert_eq!(v, &embed(&provider, q, c).unwrap());
    }
}

struct Counting {
    inner: HashProvider,
    calls: AtomicUsize,
}

impl EmbeddingProvider for Counting {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn version(&self) -> String {
        self.inner.version()
    }
    fn embed_batch(&self, items: &[(&str, &ColumnContext)]) -> Result<Vec<Vec<f32>>, ProviderError> {
        self.calls.fetch_add(items.len(), Ordering::SeqCst);
        self.inner.embed_batch(items)
    }
}

#[test]
fn disk_cache_serves_repeat_requests() {
    let dir = tempfile::tempdir().unwrap();
    let cached = CachedProvider::new(Counting { inner: HashProvider::new(16), calls: AtomicUsize::new(0) }, dir.path())
        .unwrap();
    let ctx = ColumnContext { table_name: "t".into(), column_name: "c".into(), ..Default::default() };
    let a = cached.embed_batch(&[("q", &ctx), ("r", &ctx)]).unwrap();
    let b = cached.embed_batch(&[("r", &ctx), ("q", &ctx)]).unwrap();
    assert_eq!(cached.inner().calls.load(Ordering::SeqCst), 2);
    assert_eq!(a[0], b[1]);
    assert_eq!(a[1], b[0]);
}

// --- remote provider against an in-process stub server ---

type Handler = dyn Fn(&serde_json::Value, &str) -> (u16, String) + Send + Sync;

struct Stub {
    url: String,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<serde_json::Value>>>,
}

fn stub(handler: Box<Handler>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/score", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let (h, b) = (hits.clone(), bodies.clone());
    let handler: Arc<Handler> = handler.into();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let (h, b, handler) = (h.clone(), b.clone(), handler.clone());
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                let mut auth = String::new();
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        return;
                    }
                    let l = line.trim_end().to_ascii_lowercase();
                    if l.is_empty() {
                        break;
                    }
                    if let Some(v) = l.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if l.starts_with("authorization:") {
                        auth = line.trim_end()["authorization:".len()..].trim().to_string();
                    }
                }
                let mut body = vec![0u8; len];
                reader.read_exact(&mut body).unwrap();
                let json: serde_json::Value = serde_json::from_slice(&body).unwrap();
                h.fetch_add(1, Ordering::SeqCst);
                b.lock().unwrap().push(json.clone());
                let (status, text) = handler(&json, &auth);
                let resp = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                    text.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            });
        }
    });
    Stub { url, hits, bodies }
}

fn remote(url: &str, dim: usize) -> RemoteConfig {
    RemoteConfig {
        endpoint: url.to_string(),
        model_hint: "reranker".into(),
        dim,
        max_batch: 2,
        max_in_flight: 3,
        timeout_ms: 2_000,
        retries: 1,
        auth_env: None,
        ..RemoteConfig::default()
    }
}

fn ctx(name: &str) -> ColumnContext {
    ColumnContext { table_name: "t".into(), column_name: name.into(), ..Default::default() }
}

/// Echoes each item's column name index into a one-hot vector so order can be checked.
fn echo_handler(dim: usize) -> Box<Handler> {
    Box::new(move |req, _| {
        let results: Vec<serde_json::Value> = req["items"]
            .as_array()
            .unwrap()
            .iter()
            .map(|item| {
                let doc = item["document"].as_str().unwrap();
                let name = doc.lines().nth(1).unwrap().trim_start_matches("Column name: c");
                let i: usize = name.parse().unwrap();
                let mut v = vec![0.0f32; dim];
                v[i % dim] = (i + 1) as f32;
                if req["task"] == "score" {
                    serde_json::json!({"logit": i as f64 * 0.5})
                } else {
                    serde_json::json!({"embedding": v})
                }
            })
            .collect();
        (200, serde_json::json!({"model_version": "m1", "results": results}).to_string())
    })
}

#[test]
fn remote_empty_batch_makes_no_call() {
    let s = stub(echo_handler(8));
    let p = RemoteProvider::new(remote(&s.url, 8)).unwrap();
    assert!(p.embed_batch(&[]).unwrap().is_empty());
    assert!(p.client().remote_score(&[]).unwrap().is_empty());
    assert_eq!(s.hits.load(Ordering::SeqCst), 0);
}

#[test]
fn remote_single_item_matches_recorded_payload() {
    let recorded = std::fs::read_to_string(fixture("stub_embed_response.json")).unwrap();
    let payload = recorded.clone();
    let s = stub(Box::new(move |_, _| (200, payload.clone())));
    let p = RemoteProvider::new(remote(&s.url, 8)).unwrap();
    let c = ctx("c0");
    let v = embed(&p, "q", &c).unwrap();
    assert_eq!(v, vec![0.125, -0.5, 0.25, 0.0, 1.5, -2.0, 0.0625, 3.0]);
    assert_eq!(p.version(), "stub-encoder-2024-06");
    let sent = &s.bodies.lock().unwrap()[0];
    assert_eq!(sent["model_hint"], "reranker");
    assert_eq!(sent["items"][0]["query"], "q");
    assert_eq!(sent["items"][0]["document"], render_context(&c));
}

#[test]
fn remote_batches_are_split_and_reassembled_in_order() {
    let s = stub(echo_handler(8));
    let p = RemoteProvider::new(remote(&s.url, 8)).unwrap();
    let ctxs: Vec<ColumnContext> = (0..7).map(|i| ctx(&format!("c{i}"))).collect();
    let items: Vec<(&str, &ColumnContext)> = ctxs.iter().map(|c| ("q", c)).collect();
    let out = p.embed_batch(&items).unwrap();
    assert_eq!(s.hits.load(Ordering::SeqCst), 4);
    for (i, v) in out.iter().enumerate() {
        assert_eq!(v[i % 8], (i + 1) as f32);
    }
    let logits = p.client().remote_score(&items).unwrap();
    assert_eq!(logits, (0..7).map(|i| i as f64 * 0.5).collect::<Vec<_>>());
    assert!(s.bodies.lock().unwrap().iter().all(|b| b["items"].as_array().unwrap().len() <= 2));
}

#[test]
fn remote_wrong_dimension_is_rejected() {
    let s = stub(echo_handler(4));
    let p = RemoteProvider::new(remote(&s.url, 8)).unwrap();
    let c = ctx("c1");
    assert!(matches!(embed(&p, "q", &c), Err(ProviderError::DimensionMismatch { expected: 8, found: 4 })));
}

#[test]
fn remote_version_change_is_rejected() {
    let n = Arc::new(AtomicUsize::new(0));
    let n2 = n.clone();
    let s = stub(Box::new(move |_, _| {
        let v = if n2.fetch_add(1, Ordering::SeqCst) == 0 { "m1" } else { "m2" };
        (200, format!(r#"{{"model_version": "{v}", "results": [{{"embedding": [1,0]}}]}}"#))
    }));
    let p = RemoteProvider::new(remote(&s.url, 2)).unwrap();
    let c = ctx("c0");
    embed(&p, "q", &c).unwrap();
    assert!(matches!(embed(&p, "q", &c), Err(ProviderError::VersionChanged { .. })));
}

#[test]
fn remote_retries_server_errors_and_reports_capacity() {
    let n = Arc::new(AtomicUsize::new(0));
    let n2 = n.clone();
    let s = stub(Box::new(move |_, _| {
        if n2.fetch_add(1, Ordering::SeqCst) == 0 {
            (503, "{}".into())
        } else {
            (200, r#"{"model_version": "m", "results": [{"embedding": [1,0]}]}"#.into())
        }
    }));
    let p = RemoteProvider::new(remote(&s.url, 2)).unwrap();
    assert_eq!(embed(&p, "q", &ctx("c0")).unwrap(), vec![1.0, 0.0]);
    assert_eq!(s.hits.load(Ordering::SeqCst), 2);

    let busy = stub(Box::new(|_, _| (429, "{}".into())));
    let p = RemoteProvider::new(remote(&busy.url, 2)).unwrap();
    assert!(matches!(embed(&p, "q", &ctx("c0")), Err(ProviderError::OverCapacity)));

    let bad = stub(Box::new(|_, _| (200, "not json".into())));
    let p = RemoteProvider::new(remote(&bad.url, 2)).unwrap();
    assert!(matches!(embed(&p, "q", &ctx("c0")), Err(ProviderError::Malformed(_))));
}

#[test]
fn remote_timeout_is_surfaced() {
    let s = stub(Box::new(|_, _| {
        std::thread::sleep(std::time::Duration::from_millis(600));
        (200, r#"{"model_version": "m", "results": [{"embedding": [1,0]}]}"#.into())
    }));
    let mut cfg = remote(&s.url, 2);
    cfg.timeout_ms = 150;
    cfg.retries = 0;
    let p = RemoteProvider::new(cfg).unwrap();
    assert!(matches!(embed(&p, "q", &ctx("c0")), Err(ProviderError::Timeout)));
}

#[test]
fn remote_sends_auth_token_from_environment() {
    let seen = Arc::new(Mutex::new(String::new()));
    let seen2 = seen.clone();
    let s = stub(Box::new(move |_, auth| {
        *seen2.lock().unwrap() = auth.to_string();
        (200, r#"{"model_version": "m", "results": [{"embedding": [1,0]}]}"#.into())
    }));
    std::env::set_var("SCHEMAFILTER_TEST_TOKEN", "s3cret");
    let mut cfg = remote(&s.url, 2);
    cfg.auth_env = Some("SCHEMAFILTER_TEST_TOKEN".into());
    let p = RemoteProvider::new(cfg).unwrap();
    embed(&p, "q", &ctx("c0")).unwrap();
    assert_eq!(*seen.lock().unwrap(), "Bearer s3cret");
}

#[test]
fn remote_key_prediction() {
    let s = stub(Box::new(|req, _| {
        assert_eq!(req["task"], "keys");
        assert_eq!(req["schema"]["db_id"], "university");
        (
            200,
            r#"{"model_version": "k1", "primary_keys": {"Instructors": ["iid"]},
                "foreign_keys": [{"source": "Instructors.dept_id", "target": "Departments.did"}]}"#
                .into(),
        )
    }));
    let (schema, _) = university();
    let p = RemoteProvider::new(remote(&s.url, 2)).unwrap();
    let pred = p.client().predict_keys(&schema).unwrap();
    assert_eq!(pred.foreign_keys[0].source, cr("Instructors.dept_id"));
    assert_eq!(pred.primary_keys["Instructors"], vec!["iid".to_string()]);
}
